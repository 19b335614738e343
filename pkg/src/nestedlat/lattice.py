"""Construction A lattices and their geometry.

A lattice here is ``gamma/p * C + gamma * Z^n`` for a linear code ``C`` over
Z_p. Lattice points are handled as integer vectors in *units* of
``gamma/p``; a vector ``u`` is a lattice point iff ``u mod p`` is a codeword.
The scaled integer lattice ``gamma Z^n`` is the case ``k = 0``.
"""
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import gammaln

from . import _cvp
from .errors import BudgetExceeded, RankDeficient
from .rng import BLOCK, as_generator, map_blocks, substream
from .stats import moment_from_sums, MomentEstimate
from .zp import LinearCode, distinct_codewords

DEFAULT_BUDGET = 1 << 24
# coset enumeration is used below this many codewords, sphere search above
AUTO_ENUM_LIMIT = 1024
# BKZ pays for itself in the sphere search from about this dimension on
BKZ_MIN_DIM = 12


@dataclass(frozen=True)
class Lattice:
    n: int
    gamma: float
    code: LinearCode
    kind: str = "construction-a"
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.code.n != self.n:
            raise ValueError(f"code length {self.code.n} != n={self.n}")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.kind not in ("construction-a", "scaled-integer"):
            raise ValueError(f"unknown lattice kind {self.kind!r}")
        if self.kind == "scaled-integer" and self.code.k != 0:
            raise ValueError("a scaled-integer lattice has no code rows")

    @property
    def p(self):
        return self.code.p

    @property
    def k(self):
        return self.code.k

    @property
    def unit(self):
        """Length of one integer unit, gamma / p."""
        return self.gamma / self.p

    @property
    def num_cosets(self):
        return self.p ** self.k

    @cached_property
    def rank(self):
        return self.code.rank

    @property
    def full_rank(self):
        return self.rank == self.k

    def scaled(self, factor):
        return Lattice(self.n, self.gamma * factor, self.code, self.kind)

    def to_real(self, units):
        return np.asarray(units, dtype=float) * self.unit

    def to_units(self, x):
        return np.asarray(x, dtype=float) / self.unit

    def contains_units(self, units):
        """Exact membership of integer unit vectors."""
        return self.code.contains(np.asarray(units, dtype=np.int64))

    def codewords(self, budget=DEFAULT_BUDGET):
        if "codewords" not in self._cache:
            self._cache["codewords"] = distinct_codewords(self.code, budget)
        cw = self._cache["codewords"]
        if self.num_cosets > budget:
            raise BudgetExceeded(self.num_cosets, budget)
        return cw

    @cached_property
    def basis_units(self):
        """Square integer basis (rows) of the lattice in units."""
        n, p = self.n, self.p
        if self.k == 0:
            return np.eye(n, dtype=np.int64) * p
        R, pivots = self.code.echelon
        rows = [R[i] for i in range(R.shape[0])]
        for j in range(n):
            if j not in pivots:
                e = np.zeros(n, dtype=np.int64)
                e[j] = p
                rows.append(e)
        return np.array(rows, dtype=np.int64)

    @cached_property
    def _search_basis(self):
        if self.n >= BKZ_MIN_DIM:
            red = _cvp.bkz_reduce(self.basis_units)
        else:
            red = _cvp.lll_reduce(self.basis_units, 0.99)
        A = np.ascontiguousarray(red.T)
        Q, R = np.linalg.qr(A.astype(float))
        return np.ascontiguousarray(Q), np.ascontiguousarray(R), A

    @property
    def tol(self):
        return 1e-10 * self.n * self.p * self.p

    def to_dict(self):
        return {"n": self.n, "gamma": self.gamma, "p": self.p, "k": self.k,
                "kind": self.kind, "G": self.code.G.ravel().tolist()}

    @classmethod
    def from_dict(cls, d):
        n, k, p = int(d["n"]), int(d["k"]), int(d["p"])
        G = np.asarray(d["G"], dtype=np.int64).reshape(k, n)
        return cls(n, float(d["gamma"]), LinearCode(p, G), d.get("kind", "construction-a"))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))

    def same_as(self, other):
        return (self.n == other.n and self.gamma == other.gamma
                and self.code == other.code and self.kind == other.kind)


def construction_a(code, gamma):
    return Lattice(code.n, float(gamma), code, "construction-a")


def scaled_integer(n, gamma, p=1):
    """``gamma Z^n``; pass ``p`` to share integer units with a Construction A lattice."""
    return Lattice(n, float(gamma), LinearCode.trivial(n, p), "scaled-integer")


# --- ball geometry -------------------------------------------------------

def log_volume_unit_ball(n):
    return 0.5 * n * math.log(math.pi) - float(gammaln(n / 2 + 1))


def volume_unit_ball(n):
    return math.exp(log_volume_unit_ball(n))


def ball_second_moment(r, n):
    """Second moment per dimension of a uniform ball of radius ``r``."""
    return r * r / (n + 2)


def effective_radius(volume, n):
    return math.exp((math.log(volume) - log_volume_unit_ball(n)) / n)


def sample_ball_uniform(n, r, size, rng):
    rng = as_generator(rng)
    g = rng.standard_normal((size, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = r * rng.random(size) ** (1.0 / n)
    return g * rad[:, None]


def count_integer_points_in_ball(s, r, budget=DEFAULT_BUDGET):
    """Exact ``|Z^n ∩ B(s, r)|`` by scanning the bounding box."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    n = s.size
    lo = np.ceil(s - r).astype(np.int64)
    hi = np.floor(s + r).astype(np.int64)
    if np.any(hi < lo):
        return 0
    sizes = hi - lo + 1
    total = int(np.prod(sizes.astype(object)))
    if total > budget:
        raise BudgetExceeded(total, budget, "box points")
    # accumulate squared distances one axis at a time
    d2 = np.zeros(1)
    for j in range(n):
        axis = (np.arange(lo[j], hi[j] + 1) - s[j]) ** 2
        d2 = (d2[:, None] + axis[None, :]).ravel()
    return int(np.count_nonzero(d2 <= r * r * (1 + 1e-12) + 1e-12))


def grid_sphere_bounds(r, n):
    """Volume bounds on the integer point count in a radius-``r`` ball."""
    vn = volume_unit_ball(n)
    half = math.sqrt(n) / 2
    return max(r - half, 0.0) ** n * vn, (r + half) ** n * vn


# --- quantization --------------------------------------------------------

def _choose_method(lat, method, budget):
    if method == "auto":
        return "enumerate" if lat.num_cosets <= min(AUTO_ENUM_LIMIT, budget) else "sphere"
    if method not in ("enumerate", "sphere"):
        raise ValueError(f"unknown method {method!r}")
    return method


def quantize_units(lat, x, budget=DEFAULT_BUDGET, method="auto"):
    """Nearest lattice point to ``x`` (rows), as integer unit coordinates."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Y = np.ascontiguousarray(np.atleast_2d(x) / lat.unit)
    if not np.all(np.isfinite(Y)):
        raise ValueError("non-finite input")
    if _choose_method(lat, method, budget) == "enumerate":
        out = _cvp.enum_quantize(Y, lat.codewords(budget), lat.p, lat.tol)
    else:
        Q, R, A = lat._search_basis
        out = _cvp.sphere_quantize(Y, Q, R, A, lat.tol)
    return out[0] if single else out


quantize_nn = quantize_units


def mod_lattice(lat, x, budget=DEFAULT_BUDGET, method="auto"):
    """``x - Q(x)``: the quantization error, a point of the Voronoi region."""
    x = np.asarray(x, dtype=float)
    return x - lat.to_real(quantize_units(lat, x, budget, method))


def reduce_units(lat, units, budget=DEFAULT_BUDGET, method="auto"):
    """Exact ``[u] mod lat`` for points given in (shared) integer units."""
    units = np.asarray(units, dtype=np.int64)
    return units - quantize_units(lat, lat.to_real(units), budget, method)


def sample_voronoi_uniform(lat, size, rng, budget=DEFAULT_BUDGET):
    """Uniform points on the Voronoi region: reduce uniform points of the cube [0, gamma)^n."""
    rng = as_generator(rng)
    x = rng.random((size, lat.n)) * lat.gamma
    return mod_lattice(lat, x, budget)


def estimate_second_moment(lat, samples, seed, threads=1, budget=DEFAULT_BUDGET,
                           stream="voronoi"):
    """Monte Carlo estimate of (1/n) E||U||^2 for U uniform on the Voronoi region."""
    if samples < 100:
        raise ValueError("need at least 100 samples")

    def block(b, start, size):
        u = sample_voronoi_uniform(lat, size, substream(seed, stream, b), budget)
        v = np.einsum("ij,ij->i", u, u) / lat.n
        return float(v.sum()), float(np.dot(v, v))

    parts = map_blocks(block, samples, threads)
    return moment_from_sums(sum(a for a, _ in parts), sum(b for _, b in parts), samples)


def lattice_volume(lat):
    if not lat.full_rank:
        raise RankDeficient(f"generator rank {lat.rank} < k={lat.k}")
    return lat.gamma ** lat.n * float(lat.p) ** (-lat.k)


def log2_volume(lat):
    if not lat.full_rank:
        raise RankDeficient(f"generator rank {lat.rank} < k={lat.k}")
    return lat.n * math.log2(lat.gamma) - lat.k * math.log2(lat.p)


def volume_2n(lat):
    """``V(lat)^(2/n)`` without overflow."""
    return 2.0 ** (2.0 * log2_volume(lat) / lat.n)


def estimate_nsm(lat, samples, seed, threads=1, budget=DEFAULT_BUDGET):
    m = estimate_second_moment(lat, samples, seed, threads, budget)
    scale = volume_2n(lat)
    return MomentEstimate(m.mean / scale, m.half_width_95 / scale, m.samples)


__all__ = [
    "BLOCK", "DEFAULT_BUDGET", "Lattice", "construction_a", "scaled_integer",
    "volume_unit_ball", "log_volume_unit_ball", "ball_second_moment",
    "effective_radius", "sample_ball_uniform", "count_integer_points_in_ball",
    "grid_sphere_bounds", "quantize_units", "quantize_nn", "mod_lattice",
    "reduce_units", "sample_voronoi_uniform", "estimate_second_moment",
    "lattice_volume", "log2_volume", "volume_2n", "estimate_nsm",
]
