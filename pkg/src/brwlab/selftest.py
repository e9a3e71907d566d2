"""Named invariant battery behind `brwlab selftest`.

Each check re-derives one of the package's verifiable claims at a reduced
budget: exact identities are checked exactly, statistical identities at 4
standard errors.  The small budget finishes in well under ten minutes on a
laptop; the full budget reruns the statistical checks at the scales used by
the acceptance experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import analysis as an
from . import fluctuation as fl
from . import limits as lm
from . import spine as sp
from .brw import H_CONST, H_SURVIVAL, HLaplace, enumerate_exact, run_brw_ensemble
from .offspring import make_gaussian_binary, make_two_point, verify_boundary
from .rng import EXP_SELFTEST, LANE_TREE, StreamKey, stream

__all__ = ["CheckResult", "run_selftest"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str
    warn_only: bool = False


def _check(name, ok, detail, warn_only=False):
    return CheckResult(name=name, ok=bool(ok), detail=detail,
                       warn_only=warn_only)


def run_selftest(budget="small", seed=20260814, threads=1):
    if budget not in ("small", "full"):
        raise ValueError("budget must be 'small' or 'full'")
    full = budget == "full"
    two = make_two_point()
    gau = make_gaussian_binary()
    a = two.lattice_span
    results = []

    # deterministic streams
    k = StreamKey(seed, EXP_SELFTEST, 0, LANE_TREE)
    same = np.array_equal(stream(k).random(1000), stream(k).random(1000))
    u0 = stream(k).random(10_000)
    u1 = stream(k.with_replicate(1)).random(10_000)
    corr = float(np.corrcoef(u0, u1)[0, 1])
    results.append(_check("streams-replay", same, "same key, same draws"))
    results.append(_check("streams-independent", abs(corr) < 0.02,
                          f"replicate cross-correlation {corr:+.4f}"))

    # boundary calibration: exact residuals plus a Monte Carlo cross-check
    for law in (two, gau):
        rng = stream(StreamKey(seed, EXP_SELFTEST, 0, LANE_TREE))
        rep = verify_boundary(law, 100_000, rng)
        worst = max(abs(rep.residual_mass), abs(rep.residual_drift))
        z = max(abs(rep.mass_mean - 1.0) / rep.mass_se,
                abs(rep.drift_mean) / rep.drift_se)
        results.append(_check(f"boundary-{law.kind}",
                              worst < 1e-12 and z < 4,
                              f"residuals {worst:.2e}, mc z={z:.2f}"))

    # martingale means
    reps = 100_000 if full else 20_000
    ens = run_brw_ensemble(two, 0.0, 8, reps, seed, experiment_id=EXP_SELFTEST,
                           threads=threads)
    wz = abs(ens.W[:, 8].mean() - 1.0) / (ens.W[:, 8].std(ddof=1) / math.sqrt(reps))
    dz = abs(ens.D[:, 8].mean()) / (ens.D[:, 8].std(ddof=1) / math.sqrt(reps))
    results.append(_check("martingale-means", wz < 4 and dz < 4,
                          f"W z={wz:.2f}, D z={dz:.2f} at n=8"))

    # exact enumeration vs empirical law
    n_enum = 3 if full else 2
    ens2 = run_brw_ensemble(two, 0.0, n_enum, reps, seed + 1,
                            experiment_id=EXP_SELFTEST, threads=threads)
    probs_e, w_e, d_e, wp_e = enumerate_exact(0.0, n_enum, two)
    pool = {}
    for w, d, wp, p in zip(w_e, d_e, wp_e, probs_e):
        pool[(round(w, 9), round(d, 9), round(wp, 9))] = p
    keys = list(pool)
    idx = {kk: i for i, kk in enumerate(keys)}
    counts = np.zeros(len(keys) + 1)
    trip = zip(ens2.W[:, n_enum], ens2.D[:, n_enum], ens2.Wprime[:, n_enum])
    for w, d, wp in trip:
        counts[idx.get((round(w, 9), round(d, 9), round(wp, 9)), len(keys))] += 1
    expected = np.array([pool[kk] * reps for kk in keys] + [0.0])
    ok = counts[-1] == 0
    chi2 = float(np.sum((counts[:-1] - expected[:-1]) ** 2
                        / np.maximum(expected[:-1], 1e-12)))
    from scipy.stats import chi2 as chi2_dist
    p_val = float(chi2_dist.sf(chi2, max(len(keys) - 1, 1)))
    results.append(_check("exact-enumeration",
                          ok and p_val > 1e-3,
                          f"chi-square p={p_val:.4f} over {len(keys)} atoms "
                          f"at n={n_enum}, {int(counts[-1])} off-atom"))

    # many-to-one, exact and statistical
    m2o_reps = 100_000 if full else 20_000
    worst_z = 0.0
    exact_gap = 0.0
    for H in (H_CONST, H_SURVIVAL, HLaplace(0.5)):
        rep = sp.many_to_one_check(two, 0.0, 3, H, m2o_reps, seed + 2,
                                   experiment_id=EXP_SELFTEST, threads=threads)
        worst_z = max(worst_z, rep.diff_in_se)
        exact_gap = max(exact_gap, abs(rep.exact_tree - rep.exact_spine))
    results.append(_check("many-to-one", worst_z < 4 and exact_gap < 1e-12,
                          f"worst |tree-spine| = {worst_z:.2f} SE, "
                          f"exact routes gap {exact_gap:.1e}"))

    # spine decomposition identity
    worst = 0.0
    for law, x in ((two, 0.5 * a), (gau, 1.0)):
        for r in range(25):
            rng = stream(StreamKey(seed + 3, EXP_SELFTEST, r, LANE_TREE))
            path = sp.run_spinal_brw(law, x, 5, rng)
            lhs, rhs = sp.spine_decomposition_identity(path, law, rng)
            worst = max(worst, abs(lhs - rhs))
    results.append(_check("spine-identity", worst < 1e-12,
                          f"worst |lhs-rhs| = {worst:.1e} over 50 realizations"))

    # renewal closed forms and harmonicity
    grid = a * np.array([0.0, 1.0, 2.0, 5.0, 7.5])
    r_vals = fl.renewal_function(two, grid)
    r_expect = 1.0 + np.floor(grid / a + 1e-9)
    res_strict = np.abs(fl.harmonicity_residual(two, grid)).max()
    ce = fl.c_equals(two, "exp_series")
    res_weak = np.abs(fl.harmonicity_residual(two, grid, variant="weak")).max()
    ok = (np.allclose(r_vals, r_expect, atol=1e-12) and res_strict < 1e-12
          and res_weak < 10 * ce.error_bound + 1e-12)
    results.append(_check("renewal-harmonicity", ok,
                          f"strict residual {res_strict:.1e}, weak "
                          f"{res_weak:.1e} (c= bound {ce.error_bound:.1e})"))

    # c= three ways
    vals = [fl.c_equals(two, m) for m in
            ("exp_series", "neg_excursion", "pos_excursion")]
    spread = max(v.value for v in vals) - min(v.value for v in vals)
    near2 = max(abs(v.value - 2.0) for v in vals)
    results.append(_check("c-equals", spread < 0.02 and near2 < 0.01,
                          f"three-way spread {spread:.2e}, |value-2| "
                          f"max {near2:.2e}"))

    # survival closed form and decay constant
    series = fl.survival_probability(two, 0.0, 20)
    binom = np.array([fl.srw_stay_nonneg_prob(n) for n in range(21)])
    gap = np.abs(series - binom).max()
    n_probe = 10_000 if full else 4096
    tail = fl.survival_probability(two, 0.0, n_probe)
    ratio = math.sqrt(n_probe) * tail[-1] / math.sqrt(2.0 / math.pi)
    results.append(_check("kozlov-decay",
                          gap < 1e-12 and abs(ratio - 1.0) < 0.05,
                          f"binom gap {gap:.1e}; sqrt(n) m_n(0) off "
                          f"sqrt(2/pi) by {abs(ratio-1)*100:.2f}% at "
                          f"n={n_probe}"))

    # Green mass at the origin, both methods
    window = fl.FLevel(width=a)
    q_rf = fl.green_operator(two, 0.0, window, method="renewal_formula")
    q_mc = fl.green_operator(two, 0.0, window, method="path_mc",
                             paths=20_000 if full else 4000,
                             max_steps=100_000, seed=seed + 4,
                             experiment_id=EXP_SELFTEST)
    gap = abs(q_mc.value - q_rf.value)
    tol = 3.0 * math.hypot(q_mc.error, q_rf.error + 1e-9)
    results.append(_check("green-origin",
                          abs(q_rf.value - 2.0) < 0.01 and gap < tol,
                          f"formula {q_rf.value:.6f}, mc {q_mc.value:.4f} "
                          f"(gap {gap:.4f}, tol {tol:.4f})"))

    # conditioned-walk weight harmonicity (and the Bessel marginal, softly)
    rfun = fl.renewal_handle(two)
    ns, means, ses = sp.pplus_weight_profile(
        two, 0.0, (1, 4, 16, 64), 50_000 if full else 20_000, seed + 5,
        r_func=rfun, experiment_id=EXP_SELFTEST, threads=threads)
    z = float(np.abs((means - 1.0) / ses).max())
    results.append(_check("pplus-harmonic", z < 4,
                          f"worst weight-mean z = {z:.2f}"))
    n_b = 10_000 if full else 2000
    reps_b = 250_000 if full else 50_000
    pe = sp.sample_p_plus(two, 0.0, n_b, reps_b, seed + 6, r_func=rfun,
                          experiment_id=EXP_SELFTEST, threads=threads)
    ks = sp.weighted_ks_bessel(pe, two.sigma2)
    results.append(_check("pplus-bessel", ks < 0.05,
                          f"weighted KS {ks:.4f} at n={n_b} "
                          f"(ess {pe.ess:.0f})", warn_only=True))

    # kill-from-k0 monotone recovery
    ens3 = run_brw_ensemble(two, 0.0, 8, 3000, seed + 7,
                            experiment_id=EXP_SELFTEST, threads=threads)
    _, freqs = lm.kill_from_k0(ens3, (0, 2, 4, 8))
    results.append(_check("kill-from-k0",
                          bool(np.all(np.diff(freqs) >= 0)),
                          "recovery frequency non-decreasing in k0: "
                          + np.array2string(np.round(freqs, 3))))

    # Tauberian classification battery
    pairs = [(an.pareto_log(3.0), an.RhoPower(1.0)),
             (an.bounded_law(), an.RhoPower(1.0)),
             (an.pareto_log(1.5), an.RhoPower(1.0)),
             (an.pareto_log(0.9), an.RhoConst())]
    try:
        for law_y, rho in pairs:
            an.tauberian_check(law_y, rho, seed=seed + 8)
        results.append(_check("tauberian-pairs", True,
                              "4/4 closed-form pairs classified"))
    except an.InconsistentClassificationError as exc:  # pragma: no cover
        results.append(_check("tauberian-pairs", False, str(exc)))

    # phi is a monotone clamp
    mono = True
    for law_y in (an.pareto_log(1.5), an.bounded_law(), an.exp_log(1.0)):
        _, ph = an.phi_curve(law_y, 30.0)
        mono = mono and bool(np.all(np.diff(ph) <= 1e-12))
    results.append(_check("phi-monotone", mono, "non-increasing on [0, 30]"))

    # thread-count invariance
    e1 = run_brw_ensemble(two, 0.0, 6, 64, seed + 9,
                          experiment_id=EXP_SELFTEST, threads=1)
    e3 = run_brw_ensemble(two, 0.0, 6, 64, seed + 9,
                          experiment_id=EXP_SELFTEST, threads=3)
    ident = (np.array_equal(e1.W, e3.W) and np.array_equal(e1.D, e3.D)
             and np.array_equal(e1.Wprime, e3.Wprime))
    results.append(_check("thread-invariance", ident,
                          "ensemble arrays bit-identical at 1 and 3 workers"))

    # paired-experiment wiring (trend magnitudes belong to the experiments;
    # the ratio z-scores are reported but not gated here because the sample
    # SE of the heavy-tailed W underestimates badly at small budgets)
    run = lm.seneta_heyde_experiment(two, 0.0, (2, 4, 6),
                                     20_000 if full else 2000, seed + 10,
                                     threads=threads)
    rows = run.rows()
    ok = (bool(np.all(run.discrepancy >= 0))
          and bool(np.all(run.discrepancy <= 1))
          and bool(np.all(np.abs(run.correlation) <= 1.0))
          and rows.shape == (run.replicates * len(run.n_grid), 5)
          and math.isfinite(run.c)
          and bool(np.all(np.isfinite(run.c_d)))
          and bool(np.all(np.isfinite(run.median_ratio))))
    results.append(_check("norming-run", ok,
                          "clamp metric in [0,1]; rows/fields consistent "
                          f"(worst mean z {max(run.w_mean_z.max(), run.d_mean_z.max()):.2f})"))
    return results
