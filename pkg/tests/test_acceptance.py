"""Desk-scale acceptance battery: thirteen end-to-end checks.

Each test evaluates one criterion at its stated tolerance and records a
single PASS/FAIL line through the criterion_log fixture.  The two costly
command-line runs (the martingale ensemble and the norming experiment) are
shared between the statistical criteria and the determinism criterion.
"""

import json
import math
import subprocess
import sys
import time
import warnings
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import stats

from brwlab import analysis as an
from brwlab import fluctuation as fl
from brwlab import limits as lm
from brwlab import spine as sp
from brwlab import tables
from brwlab.brw import H_CONST, H_SURVIVAL, HLaplace, enumerate_exact, run_brw_ensemble
from brwlab.offspring import (
    TWO_POINT_A,
    make_gaussian_binary,
    make_two_point,
)
from brwlab.rng import StreamKey, stream

A = TWO_POINT_A

# fixed seeds: the gates below are 4-SE gates on skewed statistics, so any
# seed only samples one draw of each; these show typical (not hand-picked
# best-case) behavior across the seeds measured during bring-up
SEED_SIM = 1
SEED_NORMING = 20260814


def _cli(args, csv_path):
    cmd = [sys.executable, "-m", "brwlab.cli", *args, "--out", str(csv_path)]
    t0 = time.perf_counter()
    proc = subprocess.run(cmd, capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    assert proc.returncode == 0, proc.stderr
    return SimpleNamespace(doc=json.loads(proc.stdout), csv=csv_path,
                           elapsed=elapsed)


@pytest.fixture(scope="session")
def sim_runs(tmp_path_factory):
    """`simulate` at the martingale-identity scale, at 1 and 8 threads."""
    base = tmp_path_factory.mktemp("sim")
    args = ["simulate", "--law", "two-point", "--x", "0", "--n", "10",
            "--replicates", "100000", "--seed", str(SEED_SIM)]
    return {t: _cli(args + ["--threads", str(t)], base / f"sim_t{t}.csv")
            for t in (1, 8)}


@pytest.fixture(scope="session")
def norming_runs(tmp_path_factory):
    """`seneta-heyde` at the trend-criterion scale, at 1 and 8 threads."""
    base = tmp_path_factory.mktemp("norming")
    args = ["seneta-heyde", "--law", "gaussian-binary", "--x", "0",
            "--n-grid", "8,12,16,20", "--replicates", "2000",
            "--seed", str(SEED_NORMING)]
    return {t: _cli(args + ["--threads", str(t)], base / f"sh_t{t}.csv")
            for t in (1, 8)}


def test_criterion_01_calibration(criterion_log):
    t0 = time.perf_counter()
    worst_res = 0.0
    sigma_errs = []
    for law, sigma2_target in ((make_two_point(), A * A),
                               (make_gaussian_binary(), 2.0 * math.log(2.0))):
        res = law.boundary_residuals()
        worst_res = max(worst_res, max(abs(r) for r in res))
        sigma_errs.append(abs(law.sigma2 - sigma2_target))
    elapsed = time.perf_counter() - t0
    ok = worst_res < 1e-12 and max(sigma_errs) < 1e-12 and elapsed < 1.0
    detail = (f"boundary residuals <= {worst_res:.2e}, sigma2 errors "
              f"{sigma_errs[0]:.2e}/{sigma_errs[1]:.2e}, {elapsed:.2f}s")
    assert criterion_log(1, ok, detail), detail


def test_criterion_02_martingale_means(sim_runs, criterion_log):
    point = sim_runs[1].doc["points"][-1]
    assert point["n"] == 10
    zw = abs(point["W_mean"] - 1.0) / point["W_se"]
    zd = abs(point["D_mean"]) / point["D_se"]
    elapsed = sim_runs[1].elapsed
    ok = zw < 4.0 and zd < 4.0 and elapsed < 60.0
    detail = (f"1e5 replicates, n=10: |E W - 1| = {zw:.2f} SE, "
              f"|E D| = {zd:.2f} SE, {elapsed:.0f}s")
    assert criterion_log(2, ok, detail), detail


def test_criterion_03_oracle_equivalence(criterion_log):
    t0 = time.perf_counter()
    law = make_two_point()
    reps = 100_000
    min_p = 1.0
    worst_z = 0.0
    for n in (1, 2, 3):
        probs, w, d, wp = enumerate_exact(0.0, n, law)
        atoms = np.column_stack([w, d, wp])
        ens = run_brw_ensemble(law, 0.0, n, replicates=reps, seed=SEED_SIM,
                               experiment_id=3)
        samp = np.column_stack([ens.W[:, -1], ens.D[:, -1],
                                ens.Wprime[:, -1]])
        dist = np.abs(samp[:, None, :] - atoms[None, :, :]).max(axis=2)
        idx = dist.argmin(axis=1)
        assert dist[np.arange(reps), idx].max() < 1e-6
        counts = np.bincount(idx, minlength=len(probs)).astype(float)
        expected = probs * reps
        small = expected < 5.0
        if small.any():
            f_obs = np.concatenate([counts[~small], [counts[small].sum()]])
            f_exp = np.concatenate([expected[~small],
                                    [expected[small].sum()]])
        else:
            f_obs, f_exp = counts, expected
        min_p = min(min_p, float(stats.chisquare(f_obs, f_exp).pvalue))
        for j in range(3):
            exact = float(probs @ atoms[:, j])
            col = samp[:, j]
            se = col.std(ddof=1) / math.sqrt(reps)
            worst_z = max(worst_z, abs(col.mean() - exact) / max(se, 1e-15))
    elapsed = time.perf_counter() - t0
    ok = min_p > 0.001 and worst_z < 4.0 and elapsed < 60.0
    detail = (f"n<=3 joint law: min chi-square p = {min_p:.3f}, worst "
              f"moment z = {worst_z:.2f} SE, {elapsed:.0f}s")
    assert criterion_log(3, ok, detail), detail


def test_criterion_04_many_to_one(criterion_log):
    t0 = time.perf_counter()
    law = make_two_point()
    worst_z = 0.0
    worst_exact = 0.0
    # lambda < 0 keeps e^{-(1+lambda)X} subcritical: for lambda > 0 the
    # n = 8 tree mean rides on ~1e-7-probability deep trees and no desk
    # replicate count represents it
    for H in (H_CONST, H_SURVIVAL, HLaplace(-0.5)):
        for n in (3, 8):
            for x in (0.0, 2 * A):
                rep = sp.many_to_one_check(law, x, n, H, replicates=20_000,
                                           seed=SEED_NORMING,
                                           experiment_id=4)
                worst_z = max(worst_z, rep.diff_in_se)
                worst_exact = max(worst_exact,
                                  abs(rep.exact_tree - rep.exact_spine))
    elapsed = time.perf_counter() - t0
    ok = worst_z < 4.0 and worst_exact < 1e-12 and elapsed < 120.0
    detail = (f"12 cells: worst tree-vs-spine gap = {worst_z:.2f} SE, "
              f"exact-route gap <= {worst_exact:.1e}, {elapsed:.0f}s")
    assert criterion_log(4, ok, detail), detail


def test_criterion_05_fluctuation_oracles(criterion_log):
    t0 = time.perf_counter()
    law = make_two_point()
    rng = stream(StreamKey(SEED_NORMING, 11, 0, 3))

    grid = A * np.concatenate([np.arange(0, 9), np.arange(0, 8) + 0.5])
    r_vals = fl.renewal_function(law, grid)
    r_exact = 1.0 + np.floor(grid / A + 1e-9)
    r_gap = float(np.abs(r_vals - r_exact).max())

    xs = A * np.arange(0, 11, dtype=np.float64)
    strict_res = float(np.abs(
        fl.harmonicity_residual(law, xs, variant="strict")).max())
    mc_res = fl.harmonicity_residual(law, xs, method="mc", samples=200_000,
                                     seed=SEED_NORMING, experiment_id=11)
    h = fl.renewal_handle(law)
    steps = law.sample_spine_steps(200_000, rng)
    mc_z = 0.0
    for xv, res in zip(xs, mc_res):
        pos = xv + steps
        vals = np.asarray(h(pos)) * (pos >= -1e-9)
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        mc_z = max(mc_z, abs(res) / max(se, 1e-15))

    ces = [fl.c_equals(law, m)
           for m in ("exp_series", "neg_excursion", "pos_excursion")]
    ce_err = max(abs(c.value - 2.0) / 2.0 for c in ces)
    ce = ces[0]

    # weak measure = c= * strict measure, level by level, across 8
    # independent ladder runs (common truncation deficit cancels in the
    # comparison)
    levels = range(1, 5)
    weak = np.array([
        [m.cdf(k * A) - m.cdf((k - 1) * A) for k in levels]
        for m in (fl.empirical_renewal(law, "weak-descending", 1000, 32,
                                       seed=SEED_NORMING + r)
                  for r in range(8))])
    strict = np.array([
        [m.cdf(k * A) - m.cdf((k - 1) * A) for k in levels]
        for m in (fl.empirical_renewal(law, "strict-descending", 1000, 32,
                                       seed=SEED_NORMING + 100 + r)
                  for r in range(8))])
    diff = weak - ce.value * strict
    dse = diff.std(axis=0, ddof=1) / math.sqrt(diff.shape[0])
    prop_z = float(np.max(np.abs(diff.mean(axis=0)) / dse))

    origin_formula = fl.green_operator(law, 0.0, fl.FLevel(A),
                                       method="renewal_formula")
    origin_mc = fl.green_operator(law, 0.0, fl.FLevel(A), method="path_mc",
                                  paths=20_000, seed=SEED_NORMING,
                                  experiment_id=12)
    origin_ok = (abs(origin_formula.value - 2.0) <= 3 * origin_formula.error
                 and abs(origin_mc.value - 2.0) <= 3 * origin_mc.error
                 and abs(origin_mc.value - origin_formula.value)
                 <= 3 * (origin_mc.error + origin_formula.error))

    mu = fl.exact_lattice_renewal(law, "strict-descending", upto=16)
    probe_z = 0.0
    for xv in (0.0, A, 3 * A, 7 * A):
        g1 = fl.green_operator(law, xv, fl.FProbe(),
                               method="renewal_formula", mu=mu)
        g2 = fl.green_operator(law, xv, fl.FProbe(), method="path_mc",
                               paths=20_000, max_steps=1_000_000,
                               seed=SEED_NORMING, experiment_id=13)
        probe_z = max(probe_z,
                      abs(g1.value - g2.value) / (g1.error + g2.error))

    elapsed = time.perf_counter() - t0
    ok = (r_gap < 1e-12 and strict_res == 0.0 and mc_z < 4.0
          and ce_err < 0.01 and prop_z < 4.0 and origin_ok
          and probe_z < 3.0 and elapsed < 300.0)
    detail = (f"R gap {r_gap:.1e}, harmonicity exact {strict_res:.1e} / "
              f"mc {mc_z:.2f} SE, c= rel err {ce_err:.1e}, "
              f"weak-vs-strict {prop_z:.2f} SE, G-origin "
              f"{origin_mc.value:.3f}/{origin_formula.value:.4f}, probe f "
              f"{probe_z:.2f} comb.err, {elapsed:.0f}s")
    assert criterion_log(5, ok, detail), detail


def test_criterion_06_kozlov_decay(criterion_log):
    t0 = time.perf_counter()
    law = make_two_point()
    m = fl.survival_probability(law, 0.0, 20, method="exact")
    binom_gap = max(abs(m[n] - math.comb(n, n // 2) / 2 ** n)
                    for n in range(21))
    n_far = 10_000
    far = fl.survival_probability(law, 0.0, n_far, method="exact")
    val = math.sqrt(n_far) * float(far[-1])
    target = math.sqrt(2.0 / math.pi)
    rel = abs(val - target) / target
    elapsed = time.perf_counter() - t0
    ok = binom_gap < 1e-12 and rel < 0.05 and elapsed < 60.0
    detail = (f"binomial identity gap {binom_gap:.1e} (n<=20), "
              f"sqrt(n) m_n = {val:.5f} vs {target:.5f} "
              f"({100 * rel:.3f}%), {elapsed:.0f}s")
    assert criterion_log(6, ok, detail), detail


def test_criterion_07_two_route_first_moment(criterion_log):
    t0 = time.perf_counter()
    law = make_two_point()
    worst_z = 0.0
    tabs = []
    for x in (0.0, 2 * A):
        tab = lm.first_moment_wprime(law, x, (3, 8, 12), replicates=20_000,
                                     seed=SEED_NORMING)
        tabs.append(tab)
        for r in tab.rows:
            se = math.hypot(r.tree_se, r.spine_se)
            worst_z = max(worst_z, abs(r.tree_mean - r.spine_value) / se)
    theta_prime = max(t.theta_prime for t in tabs)
    bound_ok = all(
        r.scaled <= theta_prime * t.r_of_x * math.exp(-t.x) + 1e-12
        for t in tabs for r in t.rows)
    elapsed = time.perf_counter() - t0
    ok = worst_z < 4.0 and bound_ok and elapsed < 120.0
    detail = (f"spine vs tree worst gap = {worst_z:.2f} SE; "
              f"sqrt(n+1) E[W'] <= {theta_prime:.4f} R(x) e^-x holds at "
              f"all 6 points, {elapsed:.0f}s")
    assert criterion_log(7, ok, detail), detail


def test_criterion_08_norming_trend(norming_runs, criterion_log):
    doc = norming_runs[1].doc
    d = np.asarray(doc["discrepancy"])
    se = np.asarray(doc["discrepancy_se"])
    diffs = np.diff(d)
    inversions = [j for j in range(diffs.size) if diffs[j] >= 0]
    allowed = (len(inversions) == 0
               or (len(inversions) == 1
                   and diffs[inversions[0]]
                   < 2 * math.hypot(se[inversions[0]],
                                    se[inversions[0] + 1])))
    corr = float(doc["correlation"][-1])
    corr_ok = corr >= 0.9
    elapsed = norming_runs[1].elapsed
    ok = allowed and corr_ok and elapsed < 900.0
    detail = (f"clamp discrepancy {np.array2string(d, precision=4)} "
              f"({len(inversions)} inversion(s)); corr(sqrt(n)W, D) at "
              f"n=20 = {corr:.3f} vs >= 0.9 required, {elapsed:.0f}s")
    assert criterion_log(8, ok, detail), detail


def test_criterion_09_laplace_diagnostic(norming_runs, criterion_log):
    doc = norming_runs[1].doc
    gaps = np.asarray(doc["laplace_gap"])
    boot = np.asarray(doc["laplace_gap_se"])
    slack = 2 * math.hypot(boot[0], boot[-1])
    ok = gaps[-1] <= gaps[0] + slack
    detail = (f"sup-lambda gap {gaps[0]:.4f} (n=8) -> {gaps[-1]:.4f} "
              f"(n=20), allowance {slack:.4f}")
    assert criterion_log(9, ok, detail), detail


def test_criterion_10_truncated_moment(criterion_log):
    t0 = time.perf_counter()
    law = make_two_point()
    tab = lm.truncated_moment_probe(law, (0.0, 2 * A, 5 * A), n=12, eps=0.5,
                                    replicates=3000, seed=SEED_NORMING)
    elapsed = time.perf_counter() - t0
    ok = tab.ratio_decreasing and elapsed < 300.0
    detail = (f"e^x E[sqrt(n) W'; >= 0.5]/R(x) = "
              f"{np.array2string(tab.ratio, precision=4)} over x = 0, 2a, "
              f"5a, {elapsed:.0f}s")
    assert criterion_log(10, ok, detail), detail


def test_criterion_11_doob_transform(criterion_log):
    t0 = time.perf_counter()
    law = make_two_point()
    rfun = fl.renewal_handle(law)
    grid, means, ses = sp.pplus_weight_profile(
        law, 0.0, (4, 16, 64, 256), replicates=20_000, seed=SEED_NORMING,
        r_func=rfun)
    harmonic_z = float(np.max(np.abs(means - 1.0) / ses))
    ens = sp.sample_p_plus(law, 0.0, 10_000, replicates=250_000,
                           seed=SEED_NORMING, r_func=rfun)
    ks = sp.weighted_ks_bessel(ens, law.sigma2)
    elapsed = time.perf_counter() - t0
    soft_ok = ks < 0.05
    if not soft_ok:
        warnings.warn(f"Bessel(3) weighted KS {ks:.3f} >= 0.05 "
                      f"(soft criterion)")
    ok = harmonic_z < 4.0 and elapsed < 180.0
    detail = (f"weight mean flat in n: worst {harmonic_z:.2f} SE; "
              f"Bessel(3) KS at n=1e4: {ks:.4f} "
              f"({'ok' if soft_ok else 'warned, soft'}), ESS {ens.ess:.0f}, "
              f"{elapsed:.0f}s")
    assert criterion_log(11, ok, detail), detail


def test_criterion_12_tauberian_pairs(criterion_log):
    t0 = time.perf_counter()
    pairs = (
        (an.pareto_log(3.0), an.RhoPower(1.0), "both_finite"),
        (an.bounded_law(), an.RhoPower(1.0), "both_finite"),
        (an.pareto_log(1.5), an.RhoPower(1.0), "both_infinite"),
        (an.pareto_log(0.9), an.RhoConst(), "both_infinite"),
    )
    results = []
    ok = True
    for law_y, rho, expected in pairs:
        try:
            rep = an.tauberian_check(law_y, rho, seed=SEED_NORMING)
            got = rep.classification
        except an.InconsistentClassificationError as exc:
            got = f"inconsistent ({exc})"
        results.append(f"{law_y.name}/{rho.name}: {got}")
        ok = ok and got == expected
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 120.0
    detail = "; ".join(results) + f", {elapsed:.1f}s"
    assert criterion_log(12, ok, detail), detail


def test_criterion_13_determinism(sim_runs, norming_runs, criterion_log):
    sim_same = tables.compare_csv(sim_runs[1].csv, sim_runs[8].csv)
    norming_same = tables.compare_csv(norming_runs[1].csv,
                                      norming_runs[8].csv)
    with open(sim_runs[1].csv) as fh:
        rows = sum(1 for _ in fh)
    ok = sim_same and norming_same and rows > 1000
    detail = (f"1-thread vs 8-thread CSVs byte-identical (timestamp "
              f"excluded): martingale run {sim_same}, norming run "
              f"{norming_same}")
    assert criterion_log(13, ok, detail), detail
