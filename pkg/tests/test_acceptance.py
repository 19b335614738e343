"""End-to-end acceptance checks, one test group per criterion.

The terminal summary prints a PASS/FAIL line for every criterion.
"""
import json
import math

import numpy as np
import pytest
from scipy.stats import norm

from nestedlat.cli import main
from nestedlat.construction import (EnsembleSpec, build_pair, build_unshaped_pair, k1_for,
                                    sigma2_for_vnr)
from nestedlat.goodness import (UNIQUE, bounded_distance_decode, dither, exceedance_test,
                                gaussian, mixture, pe_vs_vnr_sweep)
from nestedlat.lattice import (ball_second_moment, construction_a, count_integer_points_in_ball,
                               estimate_nsm, estimate_second_moment, grid_sphere_bounds,
                               sample_ball_uniform, sample_voronoi_uniform, scaled_integer)
from nestedlat.modlambda import (SHAPING_LOSS_BITS, ModLambdaConfig, coset_decode,
                                 effective_noise_variance, encode_tx, mmse_alpha,
                                 run_ensemble_simulation, run_simulation,
                                 run_unshaped_simulation)
from nestedlat.rng import substream
from nestedlat.stats import MomentEstimate, agree, moment_of
from nestedlat.zp import draw_generator, prime_for_dimension, rank_mod_p

criterion = pytest.mark.criterion


@pytest.fixture(scope="module")
def pair8():
    pair = build_pair(EnsembleSpec(8, 3.0, 4, k1=2, p_override=11), 0, calibrate=True)
    assert pair.full_rank
    return pair


@pytest.fixture(scope="module")
def unshaped8():
    return build_unshaped_pair(8, 3.0, 2, 11, 0)


# --- shared checks, reused by the unshaped pipeline -------------------------

def check_vareff(pair, snr, seed, runner=run_simulation):
    n = pair.n
    for alpha in (0.5, "mmse", 1.0):
        cfg = ModLambdaConfig(pair, snr, alpha=alpha, trials=100_000, seed=seed)
        res = runner(cfg, keep_records=True)
        emp = moment_of(res.records.z_eff_norm2 / n)
        power = estimate_second_moment(pair.coarse, cfg.power_samples, seed, stream="power")
        assert power.mean == cfg.power
        a = res.alpha
        w = (1 - a) ** 2
        predicted = MomentEstimate(a * a + w * power.mean, w * power.half_width_95, power.samples)
        assert agree(emp, predicted), (alpha, emp, predicted)


def transmitted(pair, msg, trials, seed):
    t = np.repeat(pair.leader_units([msg]), trials, axis=0)
    u = sample_voronoi_uniform(pair.coarse, trials, substream(seed, "crypto", *msg))
    return encode_tx(t, u, pair.coarse)


def check_crypto_lemma(pair, seed, trials=100_000):
    n, m = pair.n, pair.k - pair.k1
    msgs = [[0] * m, [(j + 1) % pair.p for j in range(m)]]
    assert msgs[0] != msgs[1]
    xs = [transmitted(pair, msg, trials, seed) for msg in msgs]
    # per-coordinate means, Bonferroni over the n coordinates
    crit = norm.ppf(1 - 0.05 / (2 * n))
    for j in range(n):
        a, b = moment_of(xs[0][:, j]), moment_of(xs[1][:, j])
        assert abs(a.mean - b.mean) <= crit * math.hypot(a.stderr, b.stderr), j
    powers = [moment_of((x * x).sum(1) / n) for x in xs]
    assert agree(powers[0], powers[1])
    sigma_hat = estimate_second_moment(pair.coarse, trials, seed, stream="power")
    for pw in powers:
        assert agree(pw, sigma_hat), (pw, sigma_hat)


def check_mixtures(lat1, lat2, seed, trials=10_000):
    n = lat1.n
    one = mixture((0.6, gaussian(n)), (0.8, dither(lat1)))
    two = mixture((0.5, gaussian(n)), (0.7, dither(lat1)), (0.6, dither(lat2)))
    for samp in (one, two):
        assert exceedance_test(samp, 0.3, trials, seed).p_hat <= 0.05


# --- 1 ----------------------------------------------------------------------

@criterion(1, "integer points in a ball lie between the volume bounds")
def test_grid_sphere_counts():
    rng = np.random.default_rng(2024)
    radii = np.arange(0.5, 6.01, 0.5)
    for n in (1, 2, 3):
        for _ in range(50):
            s = rng.uniform(-10, 10, n)
            for r in radii:
                lo, hi = grid_sphere_bounds(r, n)
                count = count_integer_points_in_ball(s, r)
                assert lo <= count <= hi, (n, s, r, count)


@criterion(1, "integer points in a ball lie between the volume bounds")
def test_grid_sphere_pinned():
    assert count_integer_points_in_ball(np.zeros(2), 2.0) == 13
    lo, hi = grid_sphere_bounds(2.0, 2)
    assert lo <= 13 <= hi


# --- 2 ----------------------------------------------------------------------

@criterion(2, "cubic lattice NSM within 0.5% of 1/12")
@pytest.mark.parametrize("n", [4, 16, 64])
def test_cubic_nsm(n):
    est = estimate_nsm(scaled_integer(n, 1.0), 10 ** 6, n)
    assert abs(est.mean - 1 / 12) <= 0.005 / 12


# --- 3 ----------------------------------------------------------------------

@criterion(3, "ball second moment r^2/(n+2) within 1%")
@pytest.mark.parametrize("n,r", [(3, 1.0), (5, 2.0), (10, 1.0)])
def test_ball_second_moment(n, r):
    x = sample_ball_uniform(n, r, 400_000, substream(3, "ball", n))
    m = (x * x).sum(1).mean() / n
    assert abs(m / ball_second_moment(r, n) - 1) <= 0.01


# --- 4 ----------------------------------------------------------------------

@criterion(4, "effective noise variance identity")
def test_vareff_identity(pair8):
    check_vareff(pair8, 3.0, 41)


@criterion(4, "effective noise variance identity")
def test_mmse_effective_snr_exact():
    for snr in (0.1, 1.0, 3.0, 10.0, 1000.0):
        ratio = snr / effective_noise_variance(mmse_alpha(snr), snr)
        assert abs(ratio - (1 + snr)) <= 1e-12 * (1 + snr)


# --- 5 ----------------------------------------------------------------------

@criterion(5, "transmitted signal statistics do not depend on the message")
def test_crypto_lemma(pair8):
    check_crypto_lemma(pair8, 5)


# --- 6 ----------------------------------------------------------------------

@criterion(6, "norm concentration of noise, dithers and their mixtures")
def test_gaussian_exceedance():
    assert exceedance_test(gaussian(1000), 0.1, 10_000, 6).p_hat <= 0.03


@criterion(6, "norm concentration of noise, dithers and their mixtures")
def test_built_coarse_dither_exceedance():
    n = 32
    k1 = k1_for(n, prime_for_dimension(n), 0.0)
    pair = build_pair(EnsembleSpec(n, 1.0, k1 + 1), 0)
    assert pair.coarse.full_rank
    assert exceedance_test(dither(pair.coarse), 0.3, 4096, 6).p_hat <= 0.05


@criterion(6, "norm concentration of noise, dithers and their mixtures")
def test_mixture_exceedance():
    lat1 = construction_a(draw_generator(64, 2, 3, 1), 2.0)
    lat2 = construction_a(draw_generator(64, 1, 5, 2), 3.0)
    check_mixtures(lat1, lat2, 6)


# --- 7 ----------------------------------------------------------------------

@criterion(7, "error rate falls as VNR grows")
def test_pe_vnr_threshold_trend():
    pair = build_pair(EnsembleSpec(16, 1.0, 9, p_override=17), 0)
    assert pair.full_rank
    rows = pe_vs_vnr_sweep(pair, gaussian(16), [0.8, 1.0, 1.5, 2.0, 3.0, 4.0], 10_000, 7)
    first, last = rows[0], rows[-1]
    assert last["p_hat"] * 5 <= first["p_hat"]
    assert last["ci_hi"] < first["ci_lo"]
    for a, b in zip(rows, rows[1:]):
        assert b["p_hat"] <= a["p_hat"] or b["ci_lo"] <= a["ci_hi"]


# --- 8 ----------------------------------------------------------------------

@criterion(8, "bounded-distance decoding never beats nearest-neighbour decoding")
def test_decoder_dominance():
    pair = build_pair(EnsembleSpec(8, 1.0, 4, k1=1, p_override=5), 1)
    assert pair.full_rank
    rng = substream(8, "dominance")
    trials = 10_000
    s2 = sigma2_for_vnr(pair.fine, 1.5)
    t = pair.leader_units(rng.integers(0, 5, (trials, 3)))
    y = pair.fine.to_real(t) + rng.standard_normal(t.shape) * math.sqrt(s2)
    nn_ok = pair.same_coset(coset_decode(y, pair), t)
    for f in (0.8, 1.0, 1.2):
        status, leaders = bounded_distance_decode(y, pair, f * math.sqrt(8 * s2))
        bd_ok = (status == UNIQUE) & pair.same_coset(leaders, t)
        assert not (bd_ok & ~nn_ok).any()


# --- 9 ----------------------------------------------------------------------

@criterion(9, "rank-deficiency rate below 3 p^(k-n)")
def test_rank_bound():
    n, k, p = 8, 6, 11
    draws = 10_000
    rng = substream(9, "rank")
    deficient = sum(rank_mod_p(draw_generator(n, k, p, rng)) < k for _ in range(draws))
    assert deficient / draws <= 3 * p ** (k - n)


# --- 10 ---------------------------------------------------------------------

@criterion(10, "cubic shaping pipeline")
def test_shaping_loss_constant(unshaped8):
    assert abs(SHAPING_LOSS_BITS - 0.5 * math.log2(2 * math.pi * math.e / 12)) < 1e-12
    assert abs(SHAPING_LOSS_BITS - 0.2546) < 1e-4
    res = run_unshaped_simulation(ModLambdaConfig(unshaped8, 3.0, trials=1000))
    assert res.shaping_loss_bits == SHAPING_LOSS_BITS


@criterion(10, "cubic shaping pipeline")
def test_unshaped_vareff(unshaped8):
    check_vareff(unshaped8, 3.0, 43, runner=run_unshaped_simulation)


@criterion(10, "cubic shaping pipeline")
def test_unshaped_crypto_lemma(unshaped8):
    check_crypto_lemma(unshaped8, 11)


@criterion(10, "cubic shaping pipeline")
def test_unshaped_ergodicity():
    coarse = build_unshaped_pair(32, 1.0, 2, 11, 0).coarse
    assert exceedance_test(dither(coarse), 0.3, 10_000, 10).p_hat <= 0.05
    check_mixtures(scaled_integer(64, 2.0), scaled_integer(64, 3.0), 10)


# --- 11 ---------------------------------------------------------------------

@criterion(11, "error rate decreases with n at fixed rate")
def test_trend_in_dimension():
    snr, p, eps = 10.0, 17, 0.01
    capacity = 0.5 * math.log2(1 + snr)
    ests = []
    for n in (8, 12, 16):
        k1 = k1_for(n, p, eps)
        spec = EnsembleSpec(n, snr, k1 + n // 4, k1=k1, epsilon1=eps, p_override=p)
        rate = (spec.k - spec.k1) / n * math.log2(p)
        assert abs(rate / capacity - 0.6) < 0.01
        est, members = run_ensemble_simulation(spec, 10, 2000, 11)
        assert len(members) >= 8
        ests.append(est)
    for a, b in zip(ests, ests[1:]):
        assert b.p_hat < a.p_hat
        assert b.ci95[1] < a.ci95[0]


# --- 12 ---------------------------------------------------------------------

SPEC = {"n": 6, "snr": 2.0, "k": 3, "k1": 1, "p_override": 11}

CLI_CASES = [
    ("build", dict(SPEC, seed=4)),
    ("build", {"n": 6, "snr": 1.0, "p": 7, "row_counts": [1, 2, 3], "seed": 4}),
    ("simulate", dict(SPEC, snr=[1.0, 3.0], alpha=["mmse", 0.5], trials=9000, seed=4)),
    ("goodness", {"check": "nsm", "spec": SPEC, "members": 3, "samples": 9000, "seed": 4}),
    ("goodness", {"check": "ergodicity", "trials": 9000, "deltas": [0.1, 0.3], "seed": 4,
                  "noise": {"kind": "mixture", "components": [
                      {"kind": "gaussian-iid", "n": 6, "weight": 0.5},
                      {"kind": "voronoi-dither", "spec": SPEC, "weight": 0.8}]}}),
    ("goodness", {"check": "pe_vnr", "spec": SPEC, "trials": 9000, "vnr_grid": [0.5, 2.0],
                  "seed": 4}),
    ("goodness", {"check": "impersonation", "spec": SPEC, "trials": 9000, "seed": 4}),
    ("count-points", {"n": 3, "centers": [[0, 0, 0]], "random_centers": 4, "radii": [1, 2.5],
                      "seed": 4}),
]


@criterion(12, "CLI output is identical across reruns and thread counts")
@pytest.mark.parametrize("command,config", CLI_CASES,
                         ids=[f"{c}-{i}" for i, (c, _) in enumerate(CLI_CASES)])
def test_cli_determinism(tmp_path, command, config):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(config))
    outputs = []
    for run, threads in enumerate((1, 8, 1, 8)):
        out = tmp_path / f"out{run}"
        assert main([command, "--config", str(cfg), "--out", str(out),
                     "--threads", str(threads)]) == 0
        outputs.append(out.read_bytes())
    assert len(set(outputs)) == 1
