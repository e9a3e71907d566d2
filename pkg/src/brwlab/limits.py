"""Desk-scale experiments on the martingale limits.

The headline object is the paired experiment behind the square-root norming
of the additive martingale: on each realization, sqrt(n) W_n is compared to
c D_n with c = sqrt(2/(pi sigma^2)), across a generation grid.  The true
limit lives at n -> infinity; populations grow geometrically, so these
experiments assert trends (clamped discrepancy shrinking, Laplace gaps
shrinking), not limits.  Alongside live the two-route first-moment law of
the killed martingale, the truncated-moment decay probe, and the
kill-from-k0 recovery frequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analysis import bootstrap_se
from .brw import run_brw_ensemble
from .fluctuation import estimate_theta, renewal_handle, survival_probability
from .rng import (EXP_FIRST_MOMENT, EXP_SENETA_HEYDE, EXP_TRUNCATED,
                  LANE_BOOTSTRAP, StreamKey)

__all__ = [
    "SenetaHeydeRun",
    "seneta_heyde_experiment",
    "FirstMomentRow",
    "FirstMomentTable",
    "first_moment_wprime",
    "TruncatedMomentTable",
    "truncated_moment_probe",
    "LaplaceReport",
    "laplace_compare",
    "laplace_trend",
    "kill_from_k0",
]


# -- the paired norming experiment -------------------------------------------------


@dataclass(frozen=True)
class SenetaHeydeRun:
    """Paired samples of (sqrt(n) W_n, c D_n) over a generation grid.

    Rows of sqrtn_w / c_d are replicates, columns follow n_grid; both
    columns of a row come from the same realization.  d_stability is
    |D_N - D_{N-4}| per replicate, the only affordable proxy diagnostic for
    treating D_N as the limit value.
    """

    law_id: str
    x: float
    n_grid: np.ndarray
    replicates: int
    c: float
    sqrtn_w: np.ndarray
    c_d: np.ndarray
    d_stability: np.ndarray
    discrepancy: np.ndarray
    discrepancy_se: np.ndarray
    correlation: np.ndarray
    median_ratio: np.ndarray
    w_mean_z: np.ndarray      # |mean W_n - 1| in SE units, per grid point
    d_mean_z: np.ndarray      # |mean D_n - 0| in SE units, per grid point

    def rows(self):
        """(replicate, n, sqrtnW, cD, D_stability) rows for CSV export."""
        reps, grid = self.sqrtn_w.shape
        out = np.empty((reps * grid, 5))
        k = 0
        for r in range(reps):
            for j in range(grid):
                out[k] = (r, self.n_grid[j], self.sqrtn_w[r, j],
                          self.c_d[r, j], self.d_stability[r])
                k += 1
        return out


def norming_constant(law) -> float:
    return math.sqrt(2.0 / (math.pi * law.sigma2))


def seneta_heyde_experiment(law, x, n_grid, replicates, seed,
                            experiment_id=EXP_SENETA_HEYDE,
                            threads=1) -> SenetaHeydeRun:
    """One ensemble run to max(n_grid), read out at every grid point.

    The discrepancy E[|sqrt(n) W_n - c D_n| /\\ 1] clamps at 1 so that the
    rare huge-population replicates cannot drown the typical behaviour; the
    clamp mirrors the metric the convergence-in-probability statement is
    proved in.  correlation is the plain Pearson coefficient of the pair
    across replicates, reported unclamped.
    """
    n_grid = np.asarray(sorted(int(v) for v in n_grid), dtype=np.int64)
    if n_grid.size == 0 or n_grid[0] < 0:
        raise ValueError("n_grid must be non-empty and nonnegative")
    top = int(n_grid[-1])
    c = norming_constant(law)
    ens = run_brw_ensemble(law, x, top, replicates, seed,
                           experiment_id=experiment_id, threads=threads)
    cols = n_grid
    sqrtn_w = np.sqrt(cols)[None, :] * ens.W[:, cols]
    c_d = c * ens.D[:, cols]
    back = max(top - 4, 0)
    d_stab = np.abs(ens.D[:, top] - ens.D[:, back])

    diff = np.minimum(np.abs(sqrtn_w - c_d), 1.0)
    disc = diff.mean(axis=0)
    disc_se = diff.std(axis=0, ddof=1) / math.sqrt(replicates)
    corr = np.empty(cols.size)
    med = np.empty(cols.size)
    for j in range(cols.size):
        a, b = sqrtn_w[:, j], c_d[:, j]
        corr[j] = float(np.corrcoef(a, b)[0, 1]) if a.std() > 0 and b.std() > 0 else 0.0
        pos = b > 1e-12
        med[j] = float(np.median(a[pos] / b[pos])) if pos.any() else math.nan
    wcols = ens.W[:, cols]
    dcols = ens.D[:, cols]
    w_z = np.abs(wcols.mean(axis=0) - 1.0) / (
        wcols.std(axis=0, ddof=1) / math.sqrt(replicates))
    d_z = np.abs(dcols.mean(axis=0)) / (
        dcols.std(axis=0, ddof=1) / math.sqrt(replicates))
    return SenetaHeydeRun(
        law_id=law.kind, x=float(x), n_grid=n_grid, replicates=int(replicates),
        c=c, sqrtn_w=sqrtn_w, c_d=c_d, d_stability=d_stab,
        discrepancy=disc, discrepancy_se=disc_se, correlation=corr,
        median_ratio=med, w_mean_z=w_z, d_mean_z=d_z,
    )


# -- first moment of the killed martingale ------------------------------------------


@dataclass(frozen=True)
class FirstMomentRow:
    n: int
    spine_value: float        # e^{-x} m_n(x)
    spine_se: float           # 0 for the exact lattice recursion
    tree_mean: float | None
    tree_se: float | None
    scaled: float             # sqrt(n+1) * spine_value
    asymptote: float          # theta R(x) e^{-x} / sqrt(n)


@dataclass(frozen=True)
class FirstMomentTable:
    x: float
    theta: float
    theta_prime: float        # fitted so sqrt(n+1) E_x[W'_n] <= theta' R(x) e^{-x}
    r_of_x: float
    rows: tuple

    @property
    def bound_ok(self) -> bool:
        b = self.theta_prime * self.r_of_x * math.exp(-self.x)
        return all(r.scaled <= b + 1e-12 for r in self.rows)


def first_moment_wprime(law, x, n_grid, replicates=20_000, seed=0,
                        tree_max_n=12, theta=None, renewal=None,
                        experiment_id=EXP_FIRST_MOMENT,
                        threads=1) -> FirstMomentTable:
    """E_x[W'_n] two ways, against its theta R(x) e^{-x} / sqrt(n) asymptote.

    Route (i), exact on lattice laws: E_x[W'_n] = e^{-x} m_n(x) where m_n is
    the killed walk's survival probability.  Route (ii): Monte Carlo mean of
    W'_n over tree realizations, run for n <= tree_max_n.  theta' is fitted
    as the sup over the grid of sqrt(n+1) E_x[W'_n] e^{x} / R(x) so the
    stated upper bound is tight at one grid point and holds everywhere.
    """
    n_grid = sorted(int(v) for v in n_grid)
    x = float(x)
    rfun = renewal_handle(law) if renewal is None else renewal
    rx = float(np.asarray(rfun(np.array([x])))[0])
    method = "exact" if law.is_lattice else "mc"
    series = survival_probability(law, x, max(n_grid), method=method,
                                  replicates=max(replicates, 100_000),
                                  seed=seed, experiment_id=experiment_id)
    if theta is None:
        theta = estimate_theta(law, renewal=rfun, method=method,
                               seed=seed).theta
    tree_ns = [n for n in n_grid if n <= tree_max_n]
    tree_stats = {}
    if tree_ns:
        ens = run_brw_ensemble(law, x, max(tree_ns), replicates, seed,
                               experiment_id=experiment_id, threads=threads)
        for n in tree_ns:
            col = ens.Wprime[:, n]
            tree_stats[n] = (float(col.mean()),
                             float(col.std(ddof=1) / math.sqrt(replicates)))
    rows = []
    scaled_vals = []
    for n in n_grid:
        spine = math.exp(-x) * float(series[n])
        spine_se = 0.0
        if method == "mc":
            spine_se = math.exp(-x) * math.sqrt(
                max(series[n] * (1 - series[n]), 0.0) / max(replicates, 100_000))
        tm, ts = tree_stats.get(n, (None, None))
        scaled = math.sqrt(n + 1.0) * spine
        asym = theta * rx * math.exp(-x) / math.sqrt(n) if n > 0 else math.nan
        rows.append(FirstMomentRow(n=n, spine_value=spine, spine_se=spine_se,
                                   tree_mean=tm, tree_se=ts, scaled=scaled,
                                   asymptote=asym))
        scaled_vals.append(scaled)
    theta_prime = max(v * math.exp(x) / rx for v in scaled_vals)
    return FirstMomentTable(x=x, theta=float(theta),
                            theta_prime=float(theta_prime), r_of_x=rx,
                            rows=tuple(rows))


# -- truncated-moment decay probe ----------------------------------------------------


@dataclass(frozen=True)
class TruncatedMomentTable:
    eps: float
    n: int
    x_grid: np.ndarray
    estimate: np.ndarray      # E_x[sqrt(n) W'_n; sqrt(n) W'_n >= eps]
    se: np.ndarray
    ratio: np.ndarray         # estimate * e^x / R(x)
    eps_grid: np.ndarray
    eps_ratios: np.ndarray    # ratio table, rows follow eps_grid

    @property
    def ratio_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.ratio) <= 1e-12))


def truncated_moment_probe(law, x_grid, n, eps=0.5, replicates=3000, seed=0,
                           eps_grid=(0.1, 0.5, 2.0), renewal=None,
                           experiment_id=EXP_TRUNCATED,
                           threads=1) -> TruncatedMomentTable:
    """Tabulate e^x E_x[sqrt(n) W'_n; >= eps] / R(x) across start heights.

    The decay of this ratio in x is the observable content of the
    truncated-first-moment bound; the bounding function itself is not
    constructive, so only the trend is reported.
    """
    x_grid = np.asarray(sorted(float(v) for v in x_grid), dtype=np.float64)
    n = int(n)
    rfun = renewal_handle(law) if renewal is None else renewal
    eps_grid = np.asarray(sorted(set(float(e) for e in eps_grid) | {float(eps)}))
    est = np.empty(x_grid.size)
    se = np.empty(x_grid.size)
    eps_ratios = np.empty((eps_grid.size, x_grid.size))
    for i, xv in enumerate(x_grid):
        ens = run_brw_ensemble(law, xv, n, replicates, seed,
                               experiment_id=experiment_id + i,
                               threads=threads)
        vals = math.sqrt(n) * ens.Wprime[:, n]
        rx = float(np.asarray(rfun(np.array([xv])))[0])
        for k, e in enumerate(eps_grid):
            kept = vals * (vals >= e)
            eps_ratios[k, i] = kept.mean() * math.exp(xv) / rx
        kept = vals * (vals >= eps)
        est[i] = kept.mean()
        se[i] = kept.std(ddof=1) / math.sqrt(replicates)
    j = int(np.argmin(np.abs(eps_grid - eps)))
    return TruncatedMomentTable(
        eps=float(eps), n=n, x_grid=x_grid, estimate=est, se=se,
        ratio=eps_ratios[j], eps_grid=eps_grid, eps_ratios=eps_ratios,
    )


# -- Laplace-transform diagnostic ------------------------------------------------------


@dataclass(frozen=True)
class LaplaceReport:
    lam_grid: np.ndarray
    transform_a: np.ndarray
    transform_b: np.ndarray
    gap: np.ndarray
    sup_gap: float


DEFAULT_LAM_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)


def laplace_compare(samples_a, samples_b, lam_grid=DEFAULT_LAM_GRID) -> LaplaceReport:
    """Empirical Laplace transforms of two nonnegative sample sets and
    their per-lambda gap."""
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample set")
    if a.min() < 0 or b.min() < 0:
        raise ValueError("samples must be nonnegative")
    lam = np.asarray(lam_grid, dtype=np.float64)
    ta = np.exp(-lam[:, None] * a[None, :]).mean(axis=1)
    tb = np.exp(-lam[:, None] * b[None, :]).mean(axis=1)
    gap = np.abs(ta - tb)
    return LaplaceReport(lam_grid=lam, transform_a=ta, transform_b=tb,
                         gap=gap, sup_gap=float(gap.max()))


def laplace_trend(run: SenetaHeydeRun, lam_grid=DEFAULT_LAM_GRID,
                  n_boot=200, seed=0):
    """Sup-lambda gaps between sqrt(n) W_n and the clipped limit proxy
    (c D_N)+ across the run's grid, with bootstrap standard errors.

    D_N takes negative values on a minority of finite-n realizations even
    though its limit is nonnegative; clipping at 0 keeps the transforms in
    the nonnegative-variable setting the diagnostic is stated for.
    """
    proxy = np.maximum(run.c_d[:, -1], 0.0)
    lam = np.asarray(lam_grid, dtype=np.float64)
    gaps = np.empty(run.n_grid.size)
    boot_se = np.empty(run.n_grid.size)
    reps = run.replicates
    for j in range(run.n_grid.size):
        a = np.maximum(run.sqrtn_w[:, j], 0.0)
        gaps[j] = laplace_compare(a, proxy, lam).sup_gap

        def stat(idx, a=a, proxy=proxy, lam=lam):
            return laplace_compare(a[idx], proxy[idx], lam).sup_gap

        boot_se[j] = bootstrap_se(stat, reps, n_boot=n_boot, seed=seed,
                                  lane=LANE_BOOTSTRAP, tag=j)
    return gaps, boot_se


# -- kill-from-k0 recovery --------------------------------------------------------------


def kill_from_k0(ensemble, k0_grid):
    """Frequency, per k0, that killing from generation k0 on never bites:
    min over generations k0..N of the population minimum stays >= 0.

    A particle below 0 at any generation g in [k0, N] lowers the killed
    martingale at n = g itself, so the event {W''_{n,k0} = W_n for all
    n <= N} is exactly {generation minima from k0 on all >= 0}.
    """
    gen_min = ensemble.gen_min
    top = gen_min.shape[1] - 1
    k0s = sorted(int(k) for k in k0_grid)
    if k0s and (k0s[0] < 0 or k0s[-1] > top):
        raise ValueError("k0 grid outside the simulated horizon")
    freqs = np.empty(len(k0s))
    suffix_min = np.minimum.accumulate(gen_min[:, ::-1], axis=1)[:, ::-1]
    for i, k0 in enumerate(k0s):
        freqs[i] = float((suffix_min[:, k0] >= 0.0).mean())
    return np.asarray(k0s, dtype=np.int64), freqs
