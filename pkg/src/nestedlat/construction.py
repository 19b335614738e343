"""The random nested Construction A ensemble.

One generator matrix G_f is drawn over Z_p; the coarse code uses its first
k1 rows. Both codes are lifted with the same ``gamma``, so the coarse lattice
sits inside the fine one and both share the same integer units.
"""
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigInvalid, InvalidRowCount, RankDeficient
from .lattice import (DEFAULT_BUDGET, Lattice, construction_a, estimate_second_moment,
                      log2_volume, log_volume_unit_ball, quantize_units, reduce_units,
                      scaled_integer, volume_2n)
from .rng import substream
from .zp import LinearCode, draw_generator, messages, nested_subcode, prime_for_dimension

TWO_PI_E = 2 * math.pi * math.e


def gamma_for(n, snr):
    return 2.0 * math.sqrt(n * snr)


def k1_target(n, epsilon1=0.0):
    """Right-hand side of the k1 rule: 1/2 log2(4 / V_n^(2/n)) + epsilon1."""
    return 0.5 * (2.0 - 2.0 * log_volume_unit_ball(n) / (n * math.log(2))) + epsilon1


def k1_for(n, p, epsilon1):
    """Smallest k1 with (k1/n) log2 p >= k1_target(n, epsilon1)."""
    need = n * k1_target(n, epsilon1) / math.log2(p)
    k1 = math.ceil(need - 1e-12)
    return max(k1, 1)


@dataclass(frozen=True)
class EnsembleSpec:
    n: int
    snr: float
    k: int
    k1: int = None
    epsilon1: float = 0.0
    p_override: int = None

    def __post_init__(self):
        if self.snr <= 0:
            raise ConfigInvalid("snr must be positive")
        if self.k1 is None:
            object.__setattr__(self, "k1", k1_for(self.n, self.p, self.epsilon1))
        if not 0 < self.k1 < self.k <= self.n:
            raise ConfigInvalid(f"need 0 < k1 < k <= n, got k1={self.k1}, k={self.k}, n={self.n}")

    @property
    def p(self):
        return self.p_override if self.p_override is not None else prime_for_dimension(self.n)

    @property
    def p_overridden(self):
        return self.p_override is not None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class NestedPair:
    fine: Lattice
    coarse: Lattice
    k1: int
    spec: EnsembleSpec = None
    seed: int = None
    calibration: float = 1.0
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def n(self):
        return self.fine.n

    @property
    def p(self):
        return self.fine.p

    @property
    def k(self):
        return self.fine.k

    @property
    def full_rank(self):
        return self.fine.full_rank

    @property
    def rate_bits(self):
        return (self.k - self.k1) / self.n * math.log2(self.p)

    @property
    def nesting_ratio(self):
        return float(self.p) ** ((self.k - self.k1) / self.n)

    @property
    def redundancy(self):
        """Generator rows k1+1..k, which index the coset leaders."""
        return self.fine.code.G[self.k1:]

    def leader_units(self, msg, budget=DEFAULT_BUDGET):
        """Coset leaders (in V_c) of messages in Z_p^(k-k1), integer units."""
        msg = np.atleast_2d(np.asarray(msg, dtype=np.int64))
        lifted = msg % self.p @ self.redundancy % self.p
        return reduce_units(self.coarse, lifted, budget)

    def same_coset(self, a_units, b_units):
        """Exact test of ``a ≡ b (mod coarse)``."""
        diff = np.asarray(a_units, dtype=np.int64) - np.asarray(b_units, dtype=np.int64)
        return self.coarse.contains_units(diff)

    def to_dict(self):
        return {"fine": self.fine.to_dict(), "coarse": self.coarse.to_dict(), "k1": self.k1,
                "spec": None if self.spec is None else self.spec.to_dict(),
                "seed": self.seed, "calibration": self.calibration}

    @classmethod
    def from_dict(cls, d):
        spec = None if d.get("spec") is None else EnsembleSpec.from_dict(d["spec"])
        return cls(Lattice.from_dict(d["fine"]), Lattice.from_dict(d["coarse"]), int(d["k1"]),
                   spec, d.get("seed"), float(d.get("calibration", 1.0)))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class NestedChain:
    levels: tuple
    row_counts: tuple
    seed: int = None

    def __len__(self):
        return len(self.levels)

    def pair(self, i, j):
        """Nested pair with coarse level ``i`` inside fine level ``j`` (i < j)."""
        return NestedPair(self.levels[j], self.levels[i], self.row_counts[i], seed=self.seed)

    def to_dict(self):
        return {"levels": [lv.to_dict() for lv in self.levels],
                "row_counts": list(self.row_counts), "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(Lattice.from_dict(x) for x in d["levels"]),
                   tuple(d["row_counts"]), d.get("seed"))


def check_nesting(coarse, fine, samples=64, rng=None):
    """Sampled coarse points must quantize to themselves in the fine lattice."""
    rng = np.random.default_rng(0) if rng is None else rng
    n, p = coarse.n, coarse.p
    w = rng.integers(0, p, size=(samples, coarse.k), dtype=np.int64)
    units = (w @ coarse.code.G % p if coarse.k else np.zeros((samples, n), np.int64))
    units = units + p * rng.integers(-2, 3, size=(samples, n))
    back = quantize_units(fine, fine.to_real(units))
    return bool(np.array_equal(back, units) and fine.contains_units(units).all())


def calibrate_pair(pair, samples=20000, seed=0):
    """Rescale gamma so the estimated coarse second moment equals the requested SNR."""
    snr = pair.spec.snr
    est = estimate_second_moment(pair.coarse, samples, seed, stream="calibration")
    f = math.sqrt(snr / est.mean)
    return NestedPair(pair.fine.scaled(f), pair.coarse.scaled(f), pair.k1, pair.spec,
                      pair.seed, pair.calibration * f)


def build_pair(spec, seed, calibrate=False, calibration_samples=20000):
    """Draw one member of the ensemble described by ``spec``."""
    gamma = gamma_for(spec.n, spec.snr)
    code = draw_generator(spec.n, spec.k, spec.p, substream(seed, "generator"))
    fine = construction_a(code, gamma)
    coarse = construction_a(nested_subcode(code, spec.k1), gamma)
    if not check_nesting(coarse, fine, rng=substream(seed, "nesting-check")):
        raise AssertionError("coarse lattice not contained in fine lattice")
    pair = NestedPair(fine, coarse, spec.k1, spec, seed)
    if calibrate:
        pair = calibrate_pair(pair, calibration_samples, seed)
    return pair


def build_unshaped_pair(n, snr, k, p, seed):
    """Fine Construction A lattice over the cubic coarse lattice gamma Z^n.

    gamma = sqrt(12 snr) so the uniform cube dither has power ``snr``.
    """
    gamma = math.sqrt(12.0 * snr)
    code = draw_generator(n, k, p, substream(seed, "generator"))
    fine = construction_a(code, gamma)
    coarse = scaled_integer(n, gamma, p)
    return NestedPair(fine, coarse, 0, None, seed)


def build_chain(n, snr, row_counts, p, seed):
    rows = tuple(int(r) for r in row_counts)
    if not rows or rows[0] <= 0 or rows[-1] > n or any(a >= b for a, b in zip(rows, rows[1:])):
        raise InvalidRowCount(f"row counts must satisfy 0 < k_1 < ... < k_L <= n, got {rows}")
    gamma = gamma_for(n, snr)
    code = draw_generator(n, rows[-1], p, substream(seed, "generator"))
    levels = tuple(construction_a(LinearCode(p, code.G[:r]), gamma) for r in rows)
    rng = substream(seed, "nesting-check")
    for a, b in zip(levels, levels[1:]):
        if not check_nesting(a, b, rng=rng):
            raise AssertionError("chain nesting violated")
    return NestedChain(levels, rows, seed)


def vnr(fine, sigma2_z):
    """Volume-to-noise ratio V(fine)^(2/n) / (2 pi e sigma2_z)."""
    if sigma2_z <= 0:
        raise ValueError("sigma2_z must be positive")
    return volume_2n(fine) / (TWO_PI_E * sigma2_z)


def sigma2_for_vnr(fine, mu):
    return volume_2n(fine) / (TWO_PI_E * mu)


def coset_leaders(pair, budget=DEFAULT_BUDGET):
    """All p^(k-k1) codebook points ``fine ∩ V_coarse`` as integer units."""
    if not pair.full_rank:
        raise RankDeficient("coset leaders need a full-rank generator")
    msg = messages(pair.p, pair.k - pair.k1, budget)
    return pair.leader_units(msg, budget)


def realized_epsilon1(n, p, k1):
    """Slack actually achieved by ``k1``: (k1/n) log2 p - 1/2 log2(4 / V_n^(2/n))."""
    return k1 / n * math.log2(p) - k1_target(n, 0.0)


def coarse_volume_bound_2n(n, snr, epsilon1):
    """2^(-2 epsilon1) n V_n^(2/n) snr.

    With ``gamma = 2 sqrt(n snr)`` and ``(k1/n) log2 p = 1/2 log2(4/V_n^(2/n)) + epsilon1``
    this is exactly (gamma^n p^-k1)^(2/n). Pass :func:`realized_epsilon1` to get
    the full-rank volume of a rounded k1; a rank-deficient coarse code has a
    strictly larger volume.
    """
    return 2.0 ** (-2.0 * epsilon1) * n * math.exp(2 * log_volume_unit_ball(n) / n) * snr


def coarse_volume_2n_formula(lat):
    """(gamma^n p^-k1)^(2/n), the full-rank volume formula regardless of rank."""
    return 2.0 ** (2 * (lat.n * math.log2(lat.gamma) - lat.k * math.log2(lat.p)) / lat.n)


__all__ = [
    "EnsembleSpec", "NestedPair", "NestedChain", "gamma_for", "k1_target", "k1_for",
    "build_pair", "build_unshaped_pair", "build_chain", "calibrate_pair", "check_nesting",
    "vnr", "sigma2_for_vnr", "coset_leaders", "coarse_volume_bound_2n", "realized_epsilon1",
    "coarse_volume_2n_formula", "log2_volume", "TWO_PI_E",
]
