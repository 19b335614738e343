"""Random nested Construction A lattice codes and the mod-lattice scheme."""
__version__ = "0.1.0"

from .errors import (BudgetExceeded, ConfigInvalid, DimensionTooSmall, InvalidK1, InvalidRowCount,
                     InvalidShape, LengthMismatch, NestedLatticeError, RankDeficient,
                     UnknownCheck)
from .zp import (LinearCode, draw_generator, encode, enumerate_codewords, in_code, is_prime,
                 messages, nested_subcode, prime_for_dimension, rank_mod_p, row_echelon)
from .lattice import (Lattice, construction_a, count_integer_points_in_ball,
                      estimate_nsm, estimate_second_moment, grid_sphere_bounds, lattice_volume,
                      mod_lattice, quantize_nn, quantize_units, reduce_units,
                      sample_voronoi_uniform, scaled_integer, volume_unit_ball)
from .construction import (EnsembleSpec, NestedChain, NestedPair, build_chain, build_pair,
                           build_unshaped_pair, calibrate_pair, coset_leaders, gamma_for,
                           k1_for, sigma2_for_vnr, vnr)
from .modlambda import (ModLambdaConfig, coset_decode, effective_noise_variance, encode_tx,
                        mmse_alpha, receive, run_ensemble_simulation, run_simulation,
                        run_unshaped_simulation)
from .stats import ErrorRateEstimate, MomentEstimate
