"""The dithered mod-lattice transmission scheme over an additive noise channel."""
import math
from dataclasses import dataclass, field

import numpy as np

from .construction import NestedPair, TWO_PI_E, vnr
from .errors import ConfigInvalid, RankDeficient
from .lattice import (DEFAULT_BUDGET, estimate_second_moment, mod_lattice, quantize_units,
                      reduce_units)
from .rng import blocks, map_blocks, map_spans, substream
from .stats import ErrorRateEstimate, clopper_pearson

SHAPING_LOSS_BITS = 0.5 * math.log2(TWO_PI_E / 12.0)

CSV_COLUMNS = ("n", "p", "k", "k1", "snr", "alpha", "sigma_z", "vnr", "rate_bits",
               "trials", "errors", "p_hat", "ci_lo", "ci_hi", "seed")


def mmse_alpha(snr):
    return snr / (1.0 + snr)


def effective_noise_variance(alpha, snr):
    return alpha * alpha + (1.0 - alpha) ** 2 * snr


def encode_tx(t_units, dither, coarse, budget=DEFAULT_BUDGET):
    """X = [t - U] mod coarse."""
    return mod_lattice(coarse, coarse.to_real(t_units) - dither, budget)


def receive(y, dither, alpha, coarse, budget=DEFAULT_BUDGET):
    """Y_eff = [alpha y + U] mod coarse."""
    return mod_lattice(coarse, alpha * np.asarray(y) + dither, budget)


def coset_decode(y_eff, pair, budget=DEFAULT_BUDGET):
    """Quantize to the fine lattice, then reduce modulo the coarse lattice (units)."""
    fine_pt = quantize_units(pair.fine, y_eff, budget)
    return reduce_units(pair.coarse, fine_pt, budget)


def gaussian_noise(rng, shape):
    return rng.standard_normal(shape)


def uniform_noise(rng, shape):
    # unit variance
    return (rng.random(shape) - 0.5) * math.sqrt(12.0)


NOISE_KINDS = {"gaussian": gaussian_noise, "uniform-iid": uniform_noise}


@dataclass
class ModLambdaConfig:
    """One simulation cell.

    ``alpha`` is a number in (0, 1] or the string ``"mmse"``. ``noise_kind``
    is ``"gaussian"``, ``"uniform-iid"`` or a callable ``f(rng, shape)`` that
    returns unit-variance noise. ``power_reference`` picks which SNR feeds
    the MMSE coefficient and the report: the estimated coarse second moment
    (``"calibrated"``) or the nominal ``snr``.
    """

    pair: NestedPair
    snr: float
    alpha: object = "mmse"
    noise_kind: object = "gaussian"
    sigma_z: float = 1.0
    trials: int = 10_000
    seed: int = 0
    threads: int = 1
    budget: int = DEFAULT_BUDGET
    power_reference: str = "calibrated"
    power_samples: int = 20_000
    target_ci_width: float = None
    _power: object = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.snr <= 0:
            raise ConfigInvalid("snr must be positive")
        if self.trials < 1:
            raise ConfigInvalid("trials must be >= 1")
        if self.alpha != "mmse":
            a = float(self.alpha)
            if not 0 < a <= 1:
                raise ConfigInvalid(f"alpha must lie in (0, 1], got {a}")
        if self.power_reference not in ("calibrated", "nominal"):
            raise ConfigInvalid(f"unknown power reference {self.power_reference!r}")
        if not callable(self.noise_kind) and self.noise_kind not in NOISE_KINDS:
            raise ConfigInvalid(f"unknown noise kind {self.noise_kind!r}")

    @property
    def power(self):
        """Transmit power used as the effective SNR (estimate or nominal)."""
        if self.power_reference == "nominal":
            return self.snr
        if self._power is None:
            self._power = estimate_second_moment(self.pair.coarse, self.power_samples,
                                                 self.seed, stream="power").mean
        return self._power

    @property
    def alpha_value(self):
        return mmse_alpha(self.power) if self.alpha == "mmse" else float(self.alpha)

    def noise(self, rng, shape):
        fn = self.noise_kind if callable(self.noise_kind) else NOISE_KINDS[self.noise_kind]
        return self.sigma_z * fn(rng, shape)


@dataclass
class TrialRecords:
    message: np.ndarray
    t: np.ndarray
    decoded: np.ndarray
    error: np.ndarray
    z_eff_norm2: np.ndarray
    x_power: np.ndarray


@dataclass
class SimulationResult:
    estimate: ErrorRateEstimate
    alpha: float
    power: float
    sigma2_eff: float
    vnr: float
    rate_bits: float
    records: TrialRecords = None
    shaping_loss_bits: float = None
    unshaped_rate_bound: float = None

    @property
    def p_hat(self):
        return self.estimate.p_hat

    @property
    def ci95(self):
        return self.estimate.ci95


def _run_block(cfg, alpha, b, size):
    pair = cfg.pair
    n, p = pair.n, pair.p
    coarse = pair.coarse
    msg = substream(cfg.seed, "message", b).integers(0, p, size=(size, pair.k - pair.k1),
                                                     dtype=np.int64)
    t = pair.leader_units(msg, cfg.budget)
    u = mod_lattice(coarse, substream(cfg.seed, "dither", b).random((size, n)) * coarse.gamma,
                    cfg.budget)
    x = encode_tx(t, u, coarse, cfg.budget)
    noise = cfg.noise(substream(cfg.seed, "noise", b), (size, n))
    y = x + noise
    y_eff = receive(y, u, alpha, coarse, cfg.budget)
    dec = coset_decode(y_eff, pair, cfg.budget)
    err = ~pair.same_coset(dec, t)
    z_eff = (alpha - 1.0) * x + alpha * noise
    # message index in lexicographic order of Z_p^(k-k1), last coordinate fastest
    index = np.zeros(size, dtype=np.int64)
    for j in range(msg.shape[1]):
        index = index * p + msg[:, j]
    return TrialRecords(index, t, dec, err, np.einsum("ij,ij->i", z_eff, z_eff),
                        np.einsum("ij,ij->i", x, x))


def _concat(parts):
    return TrialRecords(*(np.concatenate([getattr(r, f) for r in parts])
                          for f in ("message", "t", "decoded", "error", "z_eff_norm2", "x_power")))


def run_simulation(cfg, keep_records=False):
    pair = cfg.pair
    if not pair.full_rank:
        raise RankDeficient("simulation needs a full-rank generator")
    alpha = cfg.alpha_value
    power = cfg.power

    def block(b, start, size):
        return _run_block(cfg, alpha, b, size)

    if cfg.target_ci_width is None:
        parts = map_blocks(block, cfg.trials, cfg.threads)
    else:
        # waves of blocks are consumed in index order, so where we stop does
        # not depend on the thread count
        spans = list(blocks(cfg.trials))
        wave = max(1, cfg.threads)
        parts, errors, done = [], 0, 0
        for w0 in range(0, len(spans), wave):
            for res in map_spans(block, spans[w0:w0 + wave], cfg.threads):
                parts.append(res)
                errors += int(res.error.sum())
                done += res.error.size
                lo, hi = clopper_pearson(errors, done)
                if hi - lo < cfg.target_ci_width:
                    break
            else:
                continue
            break
    rec = _concat(parts)
    est = ErrorRateEstimate(int(rec.error.sum()), int(rec.error.size))
    s2 = alpha ** 2 * cfg.sigma_z ** 2 + (1 - alpha) ** 2 * power
    mu = vnr(pair.fine, s2) if s2 > 0 else math.inf
    return SimulationResult(est, alpha, power, s2, mu, pair.rate_bits,
                            rec if keep_records else None)


def run_unshaped_simulation(cfg, keep_records=False):
    """Same pipeline with the cubic coarse lattice; adds the shaping-loss reference rate."""
    if cfg.pair.coarse.kind != "scaled-integer":
        raise ConfigInvalid("unshaped simulation needs a scaled-integer coarse lattice")
    res = run_simulation(cfg, keep_records)
    res.shaping_loss_bits = SHAPING_LOSS_BITS
    if res.sigma2_eff > 0:
        res.unshaped_rate_bound = 0.5 * math.log2(res.power / res.sigma2_eff) - SHAPING_LOSS_BITS
    else:
        res.unshaped_rate_bound = math.inf
    return res


def csv_row(cfg, res):
    lo, hi = res.ci95
    pair = cfg.pair
    return {"n": pair.n, "p": pair.p, "k": pair.k, "k1": pair.k1, "snr": cfg.snr,
            "alpha": res.alpha, "sigma_z": cfg.sigma_z, "vnr": res.vnr,
            "rate_bits": res.rate_bits, "trials": res.estimate.trials,
            "errors": res.estimate.errors, "p_hat": res.p_hat, "ci_lo": lo, "ci_hi": hi,
            "seed": cfg.seed}


def member_seed(seed, index):
    return int(substream(seed, "member", index).integers(0, 2 ** 63 - 1))


def run_ensemble_simulation(spec, members, trials_per_member, seed, alpha="mmse",
                            calibrate=True, threads=1, budget=DEFAULT_BUDGET):
    """Pool error counts over independent ensemble members.

    Rank-deficient draws are skipped, mirroring their exclusion from the
    ensemble. Returns the pooled estimate and the per-member results.
    """
    from .construction import build_pair

    per_member = []
    errors = trials = 0
    for m in range(members):
        ms = member_seed(seed, m)
        pair = build_pair(spec, ms, calibrate=calibrate)
        if not pair.full_rank:
            continue
        res = run_simulation(ModLambdaConfig(pair, spec.snr, alpha=alpha, trials=trials_per_member,
                                             seed=ms, threads=threads, budget=budget))
        per_member.append(res)
        errors += res.estimate.errors
        trials += res.estimate.trials
    return ErrorRateEstimate(errors, trials), per_member
