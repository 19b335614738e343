import math

import numpy as np
import pytest

from nestedlat.construction import EnsembleSpec, build_pair, sigma2_for_vnr, vnr
from nestedlat.goodness import (AMBIGUOUS, EMPTY, UNIQUE, NoiseSampler, bounded_distance_decode,
                                covering_distance, covering_success_probability, dither,
                                dither_ergodicity_report, ensemble_nsm_sweep, exceedance_test,
                                gaussian, impersonation_probability, mixture, pe_vs_vnr_sweep,
                                radius_bound, uniform)
from nestedlat.lattice import construction_a, mod_lattice, scaled_integer
from nestedlat.modlambda import coset_decode
from nestedlat.rng import substream
from nestedlat.stats import moment_of
from nestedlat.zp import draw_generator, enumerate_codewords

TWO_PI_E = 2 * math.pi * math.e


@pytest.fixture(scope="module")
def pair4():
    return build_pair(EnsembleSpec(4, 1.0, 3, k1=1, p_override=7), 5)


def test_gaussian_exceedance_chi_square():
    est = exceedance_test(gaussian(1000), 0.1, 5000, 1)
    assert est.p_hat <= 0.03


def test_zero_noise_never_exceeds():
    assert exceedance_test(gaussian(10, 0.0), 0.1, 1000, 0).p_hat == 0.0


def test_uniform_exceedance():
    # the delta = 0.2 threshold sits five standard deviations above the mean of ||Z||^2
    est = exceedance_test(uniform(500), 0.2, 20_000, 3)
    assert est.p_hat <= 0.01


def test_threshold_recomputed_from_fields():
    est = exceedance_test(gaussian(37, 2.5), 0.4, 100, 0)
    assert abs(est.threshold - math.sqrt(1.4 * 37 * 2.5)) < 1e-12


def test_mixture_variance_additivity():
    lat1 = construction_a(draw_generator(64, 2, 3, 1), 2.0)
    lat2 = construction_a(draw_generator(64, 1, 5, 2), 3.0)
    mix = mixture((0.6, gaussian(64, 1.5)), (0.8, dither(lat1)), (0.5, dither(lat2)))
    nominal = 0.36 * 1.5 + 0.64 * dither(lat1).sigma2 + 0.25 * dither(lat2).sigma2
    assert mix.sigma2 == pytest.approx(nominal, rel=1e-12)
    z = mix.sample(substream(9, "check"), 20_000)
    emp = moment_of((z * z).sum(1) / 64)
    assert emp.consistent_with(nominal, slack=0.005 * nominal)


def test_sampler_scaling():
    s = uniform(8).with_sigma2(3.0)
    assert s.sigma2 == pytest.approx(3.0)
    z = s.sample(np.random.default_rng(0), 50_000)
    assert (z * z).mean() == pytest.approx(3.0, rel=0.02)


def test_sampler_rejects_bad_kind():
    with pytest.raises(ValueError):
        NoiseSampler("laplace", 4)


def test_radius_bound_limit():
    for eps in (0.5, 0.1, 0.01):
        assert radius_bound(1 / TWO_PI_E, 10 ** 6, eps, 1.0) == pytest.approx(1.0, abs=1e-3)


def test_cubic_dither_median_radius():
    rep = dither_ergodicity_report(scaled_integer(100, 1.0), [0.3], 4000, 2, epsilons=(0.5,))
    check = rep.radius_checks[0]
    # formula evaluated with G = 1/12 directly
    r_eff = math.exp(-(50 * math.log(math.pi) - math.lgamma(51)) / 100)
    direct = radius_bound(1 / 12, 100, 0.5, r_eff)
    assert check.r_eff == pytest.approx(r_eff)
    assert check.quantile <= direct
    assert check.ok


def test_dither_containment():
    lat = construction_a(draw_generator(6, 2, 5, 0), 1.0)
    rep = dither_ergodicity_report(lat, [0.5], 3000, 1)
    exc = rep.exceedances[0]
    n = 6
    big = (rep.max_norm ** 2 / (n * exc.sigma2_z)) - 1 + 1e-9
    assert exceedance_test(dither(lat), big, 3000, 1).exceed == 0


def test_covering_distance(pair4):
    c = pair4.coarse
    pts = c.to_real(enumerate_codewords(c.code) + 7)
    assert np.allclose(covering_distance(c, pts), 0)
    x = np.random.default_rng(0).uniform(-20, 20, (100, 4))
    d = covering_distance(c, x)
    m = mod_lattice(c, x)
    assert np.allclose(d, (m * m).sum(1) / 4, atol=1e-9)
    assert d.max() <= c.gamma ** 2 / 4


def test_covering_success(pair4):
    c = pair4.coarse
    assert covering_success_probability(c, c.gamma ** 2 / 4, 2000, 0).p_hat == 1.0
    assert covering_success_probability(c, 0.0, 2000, 0).p_hat == 0.0
    a = covering_success_probability(c, 1.0, 4000, 1)
    b = covering_success_probability(c, 1.0, 4000, 2)
    assert a.estimate.overlaps(b.estimate)
    assert a.max_distance <= c.gamma ** 2 / 4
    assert a.single_codeword_bound == pytest.approx(math.pi ** 2 / 2 / 16 / 16)


def test_impersonation_vanishes_for_tiny_noise(pair4):
    fine = pair4.fine
    cw = enumerate_codewords(fine.code)
    centred = (cw + 3) % 7 - 3
    dmin = min(np.linalg.norm(centred[centred.any(1)], axis=1).min(), 7) * fine.unit
    # r_Z = sqrt(1.1 * 4 * s2) far below the minimum distance minus the noise norm
    s2 = (dmin / 10) ** 2 / 4.4
    est = impersonation_probability(fine, gaussian(4, s2), 0.1, 3000, 0)
    assert est.errors == 0


def test_impersonation_supercritical():
    pair = build_pair(EnsembleSpec(8, 1.0, 4, k1=1, p_override=5), 3)
    samp = gaussian(8).with_sigma2(sigma2_for_vnr(pair.fine, 0.5))
    assert impersonation_probability(pair.fine, samp, 0.1, 2000, 1).p_hat > 0.9


def test_impersonation_monotone_in_k():
    code = draw_generator(8, 4, 5, 11)
    coarse_code = type(code)(5, code.G[:3])
    fine = construction_a(code, 4.0)
    sub = construction_a(coarse_code, 4.0)
    samp = gaussian(8, 0.2)
    a = impersonation_probability(sub, samp, 0.1, 3000, 2)
    b = impersonation_probability(fine, samp, 0.1, 3000, 2)
    assert b.errors >= a.errors


def test_bounded_distance_basic(pair4):
    t = pair4.leader_units([[3, 5], [0, 1]])
    status, leaders = bounded_distance_decode(pair4.fine.to_real(t), pair4, 0.0)
    assert status.tolist() == [UNIQUE, UNIQUE]
    assert np.array_equal(leaders, t)
    y = np.random.default_rng(0).uniform(-30, 30, (300, 4))
    big = pair4.fine.gamma * 2
    st, _ = bounded_distance_decode(y, pair4, big)
    assert not (st == EMPTY).any()
    st, _ = bounded_distance_decode(y, pair4, 1e-6)
    assert (st == EMPTY).all()


def test_bounded_distance_huge_radius_is_ambiguous(pair4):
    y = np.random.default_rng(1).normal(size=(20, 4))
    st, _ = bounded_distance_decode(y, pair4, pair4.coarse.gamma * 4)
    assert (st == AMBIGUOUS).all()


def test_bd_dominated_by_nn(pair4):
    rng = np.random.default_rng(3)
    s2 = sigma2_for_vnr(pair4.fine, 1.5)
    t = pair4.leader_units(rng.integers(0, 7, (3000, 2)))
    y = pair4.fine.to_real(t) + rng.normal(size=t.shape) * math.sqrt(s2)
    nn_ok = pair4.same_coset(coset_decode(y, pair4), t)
    for f in (0.8, 1.0, 1.2):
        st, lead = bounded_distance_decode(y, pair4, f * math.sqrt(4 * s2))
        bd_ok = (st == UNIQUE) & pair4.same_coset(lead, t)
        assert not (bd_ok & ~nn_ok).any()
        assert bd_ok.any()


def test_ensemble_nsm_sweep():
    spec = EnsembleSpec(8, 1.0, 4, p_override=23)
    rep = ensemble_nsm_sweep(spec, 50, 4000, 1)
    assert rep.members == 50
    for est in rep.nsm:
        if est is not None:
            assert est.hi >= 1 / TWO_PI_E
    fractions = [rep.fraction_good(d) for d in np.linspace(0, 2, 21)]
    assert fractions == sorted(fractions)
    assert rep.fraction_good(1.0) >= 0.9
    again = ensemble_nsm_sweep(spec, 50, 4000, 2)
    assert again.fraction_good(1.0) >= 0.9
    one = ensemble_nsm_sweep(spec, 1, 500, 3)
    assert len(one.nsm) == 1


def test_pe_vs_vnr_sweep(pair4):
    rows = pe_vs_vnr_sweep(pair4, gaussian(4), [0.5, 1.0, 2.0, 4.0], 4000, 1)
    for r in rows:
        recomputed = 2.0 ** (2 * r["log2_volume_fine"] / 4) / (TWO_PI_E * r["sigma2_z"])
        assert abs(recomputed - r["vnr"]) < 1e-12 * r["vnr"]
        assert vnr(pair4.fine, r["sigma2_z"]) == pytest.approx(r["vnr"], rel=1e-12)
    for a, b in zip(rows, rows[1:]):
        assert b["p_hat"] <= a["p_hat"] or b["ci_lo"] <= a["ci_hi"]
