"""Monte Carlo checks of the ensemble's goodness properties.

Covers norm concentration of noise and dithers, covering distance of the
coarse lattice, impersonation by competing cosets, the bounded-distance
coset decoder, ensemble NSM sweeps and error rate against VNR.
"""
import math
from dataclasses import dataclass, replace

import numpy as np

from . import _cvp
from .construction import TWO_PI_E, build_pair, sigma2_for_vnr
from .lattice import (DEFAULT_BUDGET, Lattice, effective_radius, estimate_nsm,
                      estimate_second_moment, lattice_volume, reduce_units, sample_voronoi_uniform, volume_unit_ball)
from .modlambda import coset_decode, member_seed
from .rng import map_blocks, substream
from .stats import ErrorRateEstimate, MomentEstimate, Z95

KINDS = ("gaussian-iid", "uniform-iid", "voronoi-dither", "mixture")

_dither_power_cache = {}


def dither_power(lat, samples=8192, seed=12345):
    """Estimated (1/n) E||U||^2, cached per lattice."""
    key = (lat.to_json(), samples, seed)
    if key not in _dither_power_cache:
        _dither_power_cache[key] = estimate_second_moment(lat, samples, seed, stream="dither-power")
    return _dither_power_cache[key]


@dataclass(frozen=True)
class NoiseSampler:
    """Additive noise in R^n.

    ``variance`` is the per-coordinate variance of the i.i.d. kinds.
    A mixture holds ``(weight, sampler)`` pairs of independent components.
    """

    kind: str
    n: int
    variance: float = 1.0
    lattice: Lattice = None
    components: tuple = ()
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "voronoi-dither" and self.lattice is None:
            raise ValueError("a dither sampler needs a lattice")
        if self.kind == "voronoi-dither" and self.lattice.n != self.n:
            raise ValueError("lattice dimension mismatch")
        if self.kind == "mixture":
            if not self.components:
                raise ValueError("empty mixture")
            if any(s.n != self.n for _, s in self.components):
                raise ValueError("mixture components must share n")

    @property
    def sigma2(self):
        """Nominal effective variance (1/n) E||Z||^2."""
        if self.kind in ("gaussian-iid", "uniform-iid"):
            base = self.variance
        elif self.kind == "voronoi-dither":
            base = dither_power(self.lattice).mean
        else:
            base = sum(w * w * s.sigma2 for w, s in self.components)
        return self.scale ** 2 * base

    def scaled(self, factor):
        return replace(self, scale=self.scale * factor)

    def with_sigma2(self, target):
        return self.scaled(math.sqrt(target / self.sigma2))

    def sample(self, rng, size):
        n = self.n
        if self.kind == "gaussian-iid":
            z = rng.standard_normal((size, n)) * math.sqrt(self.variance)
        elif self.kind == "uniform-iid":
            z = (rng.random((size, n)) - 0.5) * math.sqrt(12 * self.variance)
        elif self.kind == "voronoi-dither":
            z = sample_voronoi_uniform(self.lattice, size, rng)
        else:
            z = np.zeros((size, n))
            for (w, s), sub in zip(self.components, rng.spawn(len(self.components))):
                z += w * s.sample(sub, size)
        return self.scale * z


def gaussian(n, variance=1.0):
    return NoiseSampler("gaussian-iid", n, variance)


def uniform(n, variance=1.0 / 12):
    return NoiseSampler("uniform-iid", n, variance)


def dither(lat):
    return NoiseSampler("voronoi-dither", lat.n, lattice=lat)


def mixture(*weighted):
    """``mixture((a, N), (b1, U1), ...)`` for ``a N + b1 U1 + ...``."""
    return NoiseSampler("mixture", weighted[0][1].n, components=tuple(weighted))


# --- norm concentration ----------------------------------------------------

@dataclass(frozen=True)
class ExceedanceEstimate:
    delta: float
    n: int
    sigma2_z: float
    exceed: int
    trials: int

    @property
    def threshold(self):
        return math.sqrt((1 + self.delta) * self.n * self.sigma2_z)

    @property
    def p_hat(self):
        return self.exceed / self.trials

    @property
    def ci95(self):
        return ErrorRateEstimate(self.exceed, self.trials).ci95


def _norms2(sampler, trials, seed, stream, threads):
    def block(b, start, size):
        z = sampler.sample(substream(seed, stream, b), size)
        return np.einsum("ij,ij->i", z, z)

    return np.concatenate(map_blocks(block, trials, threads))


def exceedance_test(sampler, delta, trials, seed, threads=1):
    """Empirical Pr(||Z||^2 > (1 + delta) n sigma2_z)."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    s2 = sampler.sigma2
    norms2 = _norms2(sampler, trials, seed, "exceedance", threads)
    r2 = (1 + delta) * sampler.n * s2
    return ExceedanceEstimate(delta, sampler.n, s2, int(np.count_nonzero(norms2 > r2)), trials)


def radius_bound(nsm, n, eps, r_eff):
    """Radius that a uniform point of a set with this NSM leaves with probability <= eps."""
    num = TWO_PI_E * nsm - n / (n + 2) * (1 - eps) ** (1 + 2 / n)
    return math.sqrt(num / eps) * r_eff


@dataclass
class RadiusCheck:
    eps: float
    r_eps: float
    r_eff: float
    quantile: float
    quantile_lo: float
    ok: bool


@dataclass
class DitherReport:
    nsm: MomentEstimate
    exceedances: list
    radius_checks: list
    max_norm: float


def dither_ergodicity_report(lat, deltas, trials, seed, epsilons=(0.5, 0.1, 0.05), threads=1):
    samp = dither(lat)
    exc = [exceedance_test(samp, d, trials, seed, threads) for d in deltas]
    nsm = estimate_nsm(lat, max(trials, 100), seed, threads)
    r_eff = effective_radius(lattice_volume(lat), lat.n)
    norms = np.sort(np.sqrt(_norms2(samp, trials, seed, "exceedance", threads)))
    checks = []
    for eps in epsilons:
        r_eps = radius_bound(nsm.mean + nsm.half_width_95, lat.n, eps, r_eff)
        q = norms[min(trials - 1, int(math.ceil((1 - eps) * trials)) - 1)]
        # lower 95% confidence order statistic for the (1 - eps) quantile
        j = int(math.floor((1 - eps) * trials - Z95 * math.sqrt(trials * eps * (1 - eps))))
        q_lo = norms[max(0, min(trials - 1, j - 1))]
        checks.append(RadiusCheck(eps, r_eps, r_eff, float(q), float(q_lo), bool(q_lo <= r_eps)))
    return DitherReport(nsm, exc, checks, float(norms[-1]))


# --- covering --------------------------------------------------------------

def covering_distance(coarse, x, budget=DEFAULT_BUDGET):
    """(1/n) min over cosets of ||(x - gamma/p c)*||^2, with * the centred mod gamma."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Y = np.ascontiguousarray(np.atleast_2d(x) / coarse.unit)
    _, dist = _cvp.enum_within(Y, coarse.codewords(budget), coarse.p, 0.0)
    d = dist.min(axis=1) * coarse.unit ** 2 / coarse.n
    return float(d[0]) if single else d


@dataclass
class CoveringReport:
    estimate: ErrorRateEstimate
    threshold: float
    max_distance: float
    single_codeword_bound: float

    @property
    def p_hat(self):
        return self.estimate.p_hat


def covering_success_probability(coarse, threshold, probes, seed, budget=DEFAULT_BUDGET, threads=1):
    """Fraction of uniform probes in [0, gamma)^n with d(x, coarse) <= threshold."""
    def block(b, start, size):
        x = substream(seed, "probe", b).random((size, coarse.n)) * coarse.gamma
        return covering_distance(coarse, x, budget)

    d = np.concatenate(map_blocks(block, probes, threads))
    n = coarse.n
    hits = int(np.count_nonzero(d <= threshold))
    bound = volume_unit_ball(n) * 2.0 ** (-n) / n ** 2
    # successes are tallied in the "errors" slot of the binomial estimate
    return CoveringReport(ErrorRateEstimate(hits, probes), threshold, float(d.max()), bound)


# --- coding goodness -------------------------------------------------------

def impersonation_probability(fine, sampler, rho, trials, seed, budget=DEFAULT_BUDGET, threads=1):
    """Pr(some point of fine \\ gamma Z^n lies within sqrt((1+rho) n sigma2) of Z)."""
    cw = fine.codewords(budget)
    cw = cw[cw.any(axis=1)]
    r2_units = (1 + rho) * fine.n * sampler.sigma2 / fine.unit ** 2

    def block(b, start, size):
        z = sampler.sample(substream(seed, "impersonation", b), size)
        if cw.shape[0] == 0:
            return 0
        hit, _ = _cvp.enum_within(np.ascontiguousarray(z / fine.unit), cw, fine.p, r2_units)
        return int(np.count_nonzero(hit.any(axis=1)))

    return ErrorRateEstimate(sum(map_blocks(block, trials, threads)), trials)


EMPTY, UNIQUE, AMBIGUOUS = 0, 1, 2


def coset_labels(pair, codewords):
    """Canonical label of each fine codeword's coset modulo the coarse code."""
    code = pair.coarse.code
    p = pair.p
    if code.k == 0:
        resid = codewords % p
    else:
        R, piv = code.echelon
        resid = (codewords - codewords[:, list(piv)] @ R) % p
    _, labels = np.unique(resid, axis=0, return_inverse=True)
    return labels.ravel()


def bounded_distance_decode(y, pair, r, budget=DEFAULT_BUDGET):
    """List the fine points within ``r`` of ``y`` and reduce them modulo the coarse lattice.

    Returns ``(status, leaders)``: status per row is EMPTY, UNIQUE or
    AMBIGUOUS, and ``leaders`` holds the coset leader (integer units) for
    UNIQUE rows and zeros elsewhere.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    fine = pair.fine
    key = ("bd", budget)
    if key not in pair._cache:
        cw = fine.codewords(budget)
        pair._cache[key] = (cw, coset_labels(pair, cw))
    cw, labels = pair._cache[key]
    Y = np.ascontiguousarray(y / fine.unit)
    hit, _ = _cvp.enum_within(Y, cw, fine.p, (r / fine.unit) ** 2 * (1 + 1e-12))
    status = np.full(len(y), EMPTY, dtype=np.int64)
    leaders = np.zeros(y.shape, dtype=np.int64)
    for i in np.nonzero(hit.any(axis=1))[0]:
        idx = np.nonzero(hit[i])[0]
        if np.unique(labels[idx]).size > 1:
            status[i] = AMBIGUOUS
            continue
        c = cw[idx[0]]
        u = c + fine.p * np.rint((Y[i] - c) / fine.p).astype(np.int64)
        leaders[i] = reduce_units(pair.coarse, u[None, :], budget)[0]
        status[i] = UNIQUE
    return status, leaders


def random_leaders(pair, rng, size, budget=DEFAULT_BUDGET):
    msg = rng.integers(0, pair.p, size=(size, pair.k - pair.k1), dtype=np.int64)
    return pair.leader_units(msg, budget)


def pe_vs_vnr_sweep(pair, sampler, vnr_grid, trials, seed, budget=DEFAULT_BUDGET, threads=1):
    """Coset-decoding error rate of t + Z with Z rescaled to hit each VNR."""
    rows = []
    for g, mu in enumerate(vnr_grid):
        s2 = sigma2_for_vnr(pair.fine, mu)
        samp = sampler.with_sigma2(s2)

        def block(b, start, size, samp=samp, g=g):
            t = random_leaders(pair, substream(seed, "message", g, b), size, budget)
            z = samp.sample(substream(seed, "noise", g, b), size)
            dec = coset_decode(pair.fine.to_real(t) + z, pair, budget)
            return int(np.count_nonzero(~pair.same_coset(dec, t)))

        est = ErrorRateEstimate(sum(map_blocks(block, trials, threads)), trials)
        lo, hi = est.ci95
        rows.append({"vnr": float(mu), "sigma2_z": s2, "log2_volume_fine": None,
                     "trials": trials, "errors": est.errors, "p_hat": est.p_hat,
                     "ci_lo": lo, "ci_hi": hi})
    from .lattice import log2_volume
    for row in rows:
        row["log2_volume_fine"] = log2_volume(pair.fine)
    return rows


# --- ensemble sweeps -------------------------------------------------------

@dataclass
class EnsembleReport:
    spec: object
    seed: int
    member_seeds: list
    full_rank: list
    nsm: list

    @property
    def members(self):
        return len(self.nsm)

    def fraction_good(self, delta1):
        """Members whose NSM upper 95% bound is below (1 + delta1) / (2 pi e)."""
        limit = (1 + delta1) / TWO_PI_E
        good = [fr and est is not None and est.hi < limit
                for fr, est in zip(self.full_rank, self.nsm)]
        return sum(good) / len(good)


def ensemble_nsm_sweep(spec, members, samples, seed, threads=1, budget=DEFAULT_BUDGET):
    seeds, ranks, nsms = [], [], []
    for m in range(members):
        ms = member_seed(seed, m)
        pair = build_pair(spec, ms)
        seeds.append(ms)
        ranks.append(pair.coarse.full_rank)
        nsms.append(estimate_nsm(pair.coarse, samples, ms, threads, budget)
                    if pair.coarse.full_rank else None)
    return EnsembleReport(spec, seed, seeds, ranks, nsms)
