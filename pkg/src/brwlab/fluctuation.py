"""Fluctuation theory of the spine walk: ladders, renewal, Green operators.

Everything here concerns the centered random walk S with the tilted step
law of a reproduction law.  Four ladder processes (strict/weak x
descending/ascending) are extracted from paths; their renewal measures mu,
mu=, mu^, mu^= satisfy mu= = c= mu and mu^= = c= mu^ with

    c= = (1 - sum_n P(S_n = 0, S_k < 0 for 1 <= k < n))^{-1}
       = (1 - sum_n P(S_n = 0, S_k > 0 for 1 <= k < n))^{-1}
       = exp(sum_n P(S_n = 0)/n).

The renewal function R(x) = mu([0, x]) is harmonic for the walk killed on
entering (-inf, 0); the weak variant Rbar(x) = mu=([0, x)) (1 at x = 0) is
harmonic for killing on (-inf, 0].  Skip-free-down lattice walks admit
closed forms; everything else is estimated from path ensembles with
explicit truncation bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, zeta

from .errors import InsufficientExcursionsError
from .numerics import csum
from .rng import LANE_AUX, LANE_SPINE, StreamKey, stream

__all__ = [
    "LadderDecomposition",
    "extract_ladders",
    "RenewalMeasure",
    "empirical_renewal",
    "duality_measure",
    "exact_lattice_renewal",
    "LatticeRenewalFunction",
    "LatticeWeakRenewalFunction",
    "EmpiricalRenewalFunction",
    "renewal_handle",
    "renewal_function",
    "weak_renewal_function",
    "CEqualsResult",
    "c_equals",
    "survival_probability",
    "srw_stay_nonneg_prob",
    "ThetaReport",
    "estimate_theta",
    "harmonicity_residual",
    "GrowthBounds",
    "r_growth_bounds",
    "GreenQuery",
    "green_operator",
    "F_EXP",
    "F_CAUCHY",
    "FLevel",
    "FProbe",
    "FTimesR",
    "potential_kernel_probe",
]


# -- ladder extraction ---------------------------------------------------------


@dataclass(frozen=True)
class LadderDecomposition:
    """Epochs and heights of the four ladder processes of one path."""

    strict_desc_epochs: np.ndarray
    strict_desc_heights: np.ndarray
    weak_desc_epochs: np.ndarray
    weak_desc_heights: np.ndarray
    strict_asc_epochs: np.ndarray
    strict_asc_heights: np.ndarray
    weak_asc_epochs: np.ndarray
    weak_asc_heights: np.ndarray


def extract_ladders(path) -> LadderDecomposition:
    """Ladder epochs/heights of a path starting at path[0] (epoch 0 is a
    ladder epoch of every kind by convention)."""
    s = np.asarray(path, dtype=np.float64)
    if s.size == 0:
        raise ValueError("empty path")
    zero = np.array([0], dtype=np.int64)

    def epochs(cmp, acc):
        if s.size == 1:
            return zero
        run = acc(s)[:-1]
        k = np.nonzero(cmp(s[1:], run))[0] + 1
        return np.concatenate((zero, k))

    sd = epochs(np.less, np.minimum.accumulate)
    wd = epochs(np.less_equal, np.minimum.accumulate)
    sa = epochs(np.greater, np.maximum.accumulate)
    wa = epochs(np.greater_equal, np.maximum.accumulate)
    return LadderDecomposition(sd, s[sd], wd, s[wd], sa, s[sa], wa, s[wa])


# -- renewal measures ------------------------------------------------------------


@dataclass(frozen=True)
class RenewalMeasure:
    """Measure of |ladder heights| on [0, inf): atom positions and masses.

    Masses are per-path averages, so the epoch-0 atom at 0 always carries
    mass >= 1.  truncation_bound is the ladder-mean-scaled M^(-1/2) figure
    for stopping at the M-th epoch; bias_bound(x) is the sharper estimate
    R_hat(x) * P_hat(|H_M| <= x) built from the observed M-th heights.
    """

    positions: np.ndarray
    masses: np.ndarray
    source: str
    exact: bool
    n_paths: int
    epochs_per_path: int
    mean_height: float
    final_heights: np.ndarray | None = None

    def cdf(self, x):
        """Mass on [0, x]."""
        x = np.asarray(x, dtype=np.float64)
        cum = np.concatenate(([0.0], np.cumsum(self.masses)))
        idx = np.searchsorted(self.positions, x + 1e-12, side="right")
        return np.where(x < -1e-12, 0.0, cum[idx])

    def cdf_open(self, x):
        """Mass on [0, x)."""
        x = np.asarray(x, dtype=np.float64)
        cum = np.concatenate(([0.0], np.cumsum(self.masses)))
        idx = np.searchsorted(self.positions, x - 1e-12, side="right")
        return np.where(x < 0.0, 0.0, cum[idx])

    @property
    def truncation_bound(self) -> float:
        if self.exact:
            return 0.0
        m = max(self.mean_height, 1e-12)
        return self.epochs_per_path ** -0.5 / m

    def bias_bound(self, x) -> np.ndarray:
        """Mass missed beyond the M-th epoch below x: at most R(x) times
        the chance the truncation point itself is still below x."""
        x = np.asarray(x, dtype=np.float64)
        if self.exact or self.final_heights is None:
            return np.zeros_like(x)
        frac = np.searchsorted(np.sort(self.final_heights), x, side="right")
        return self.cdf(x) * frac / max(self.final_heights.size, 1)


_LADDER_KINDS = {
    "strict-descending": (np.less, np.minimum.accumulate),
    "weak-descending": (np.less_equal, np.minimum.accumulate),
    "strict-ascending": (np.greater, np.maximum.accumulate),
    "weak-ascending": (np.greater_equal, np.maximum.accumulate),
}


def _collect_ladder_heights(law, kind, epochs, rng, max_steps=2_000_000):
    """|H_0..H_M| of one path, walked until M ladder epochs of the kind.

    Lattice walks run in integer level units: a float cumsum that revisits
    a lattice level one ulp below the running minimum would register a
    spurious strict record.
    """
    cmp, acc = _LADDER_KINDS[kind]
    lattice = law.is_lattice
    span = law.lattice_span
    heights = [0]
    ref = 0
    pos = 0
    steps = 0
    block = 4096
    while len(heights) <= epochs and steps < max_steps:
        inc = law.sample_spine_steps(block, rng)
        if lattice:
            inc = np.rint(inc / span).astype(np.int64)
        walk = pos + np.cumsum(inc)
        run = acc(np.concatenate(([ref], walk)))
        hit = np.nonzero(cmp(walk, run[:-1]))[0]
        for k in hit:
            heights.append(walk[k])
            if len(heights) > epochs:
                break
        ref = run[-1]
        pos = walk[-1]
        steps += block
    out = np.abs(np.asarray(heights[: epochs + 1], dtype=np.float64))
    return out * span if lattice else out


def _aggregate_atoms(values, law, n_paths):
    if law.is_lattice:
        span = law.lattice_span
        lev = np.rint(values / span).astype(np.int64)
        off = np.abs(values - lev * span)
        if off.size and off.max() > 1e-9:
            raise ValueError("ladder height off the declared lattice grid")
        uniq, counts = np.unique(lev, return_counts=True)
        return uniq * span, counts / n_paths
    uniq, counts = np.unique(np.round(values, 12), return_counts=True)
    return uniq, counts / n_paths


def empirical_renewal(law, kind, n_paths, epochs, seed,
                      experiment_id=0) -> RenewalMeasure:
    """Renewal measure of one ladder process, estimated from n_paths walks
    truncated at their M-th ladder epoch."""
    if kind not in _LADDER_KINDS:
        raise ValueError(f"unknown ladder kind {kind!r}")
    all_heights = []
    finals = []
    for r in range(n_paths):
        rng = stream(StreamKey(seed, experiment_id, r, LANE_SPINE))
        h = _collect_ladder_heights(law, kind, epochs, rng)
        all_heights.append(h)
        finals.append(h[-1])
    flat = np.concatenate(all_heights)
    if flat.size < 10:
        raise InsufficientExcursionsError(
            f"only {flat.size} ladder epochs observed; need at least 10"
        )
    positions, masses = _aggregate_atoms(flat, law, n_paths)
    steps = [np.abs(np.diff(h)).mean() for h in all_heights if h.size > 1]
    return RenewalMeasure(
        positions=positions, masses=masses, source=kind, exact=False,
        n_paths=n_paths, epochs_per_path=epochs,
        mean_height=float(np.mean(steps)) if steps else 0.0,
        final_heights=np.array(finals),
    )


def duality_measure(law, n_paths, horizon, seed,
                    experiment_id=0) -> RenewalMeasure:
    """Second, independent estimator of the strict-descending renewal
    measure: mu(dx) = sum_n P(|S_n| in dx, S_k < 0 for 1 <= k <= n).

    Each path contributes |S_n| for every n <= horizon while it has stayed
    strictly negative since step 1 (plus the n = 0 atom at 0).  Lattice
    walks run in integer level units so that the strict-negativity test
    cannot be tripped by float cumsum noise at a revisited level."""
    lattice = law.is_lattice
    span = law.lattice_span
    collected = []
    for r in range(n_paths):
        rng = stream(StreamKey(seed, experiment_id, r, LANE_AUX))
        vals = [0]
        pos = 0
        left = horizon
        alive = True
        while alive and left > 0:
            m = min(4096, left)
            inc = law.sample_spine_steps(m, rng)
            if lattice:
                inc = np.rint(inc / span).astype(np.int64)
            walk = pos + np.cumsum(inc)
            bad = np.nonzero(walk >= 0)[0]
            stop = int(bad[0]) if bad.size else m
            vals.extend(np.abs(walk[:stop]).tolist())
            alive = bad.size == 0
            pos = walk[-1]
            left -= m
        path_vals = np.asarray(vals, dtype=np.float64)
        collected.append(path_vals * span if lattice else path_vals)
    flat = np.concatenate(collected)
    positions, masses = _aggregate_atoms(flat, law, n_paths)
    pos_vals = flat[flat > 0]
    return RenewalMeasure(
        positions=positions, masses=masses, source="duality", exact=False,
        n_paths=n_paths, epochs_per_path=horizon,
        mean_height=float(np.mean(pos_vals)) if pos_vals.size else 0.0,
        final_heights=None,
    )


# -- exact lattice renewal -------------------------------------------------------


def _is_skip_free_down(law):
    if not (law.has_finite_support and law.is_lattice):
        return False
    levels, _ = law.spine_step_levels()
    return int(levels.min()) == -1


@dataclass(frozen=True)
class LatticeRenewalFunction:
    """R(x) = 1 + floor(x/span) for skip-free-down lattice walks: strict
    descents move exactly one level, so mu has unit mass at every level."""

    span: float

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        val = 1.0 + np.floor((x + 1e-9) / self.span)
        return np.where(x < -1e-9, 0.0, val)


@dataclass(frozen=True)
class LatticeWeakRenewalFunction:
    """Rbar(x) = c= * ceil(x/span) for x > 0, and 1 at x = 0."""

    span: float
    c_equals: float

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        val = self.c_equals * np.ceil((x - 1e-9) / self.span)
        return np.where(x < -1e-9, 0.0, np.where(x <= 1e-9, 1.0, val))


@dataclass(frozen=True)
class EmpiricalRenewalFunction:
    """Picklable step function built from a renewal measure's atoms."""

    positions: tuple
    cummass: tuple

    @classmethod
    def from_measure(cls, measure):
        return cls(tuple(measure.positions.tolist()),
                   tuple(np.cumsum(measure.masses).tolist()))

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        cum = np.concatenate(([0.0], np.asarray(self.cummass)))
        idx = np.searchsorted(np.asarray(self.positions), x + 1e-12,
                              side="right")
        return np.where(x < -1e-12, 0.0, cum[idx])


def exact_lattice_renewal(law, kind="strict-descending",
                          upto=256) -> RenewalMeasure:
    """Closed-form renewal measure for skip-free-down lattice walks: unit
    masses on the span grid (scaled by c= for the weak variant)."""
    if not _is_skip_free_down(law):
        raise ValueError("exact renewal needs a skip-free-down lattice walk")
    span = law.lattice_span
    if kind == "strict-descending":
        mass = 1.0
    elif kind == "weak-descending":
        mass = c_equals(law, "exp_series").value
    else:
        raise ValueError("exact form shipped for descending ladders only")
    positions = span * np.arange(upto + 1, dtype=np.float64)
    return RenewalMeasure(
        positions=positions, masses=np.full(upto + 1, mass), source=kind,
        exact=True, n_paths=0, epochs_per_path=upto, mean_height=span,
        final_heights=None,
    )


def renewal_handle(source):
    """A picklable callable x -> R(x) from a law (exact when available) or
    an empirical RenewalMeasure."""
    if isinstance(source, RenewalMeasure):
        if not source.exact and source.n_paths * source.epochs_per_path < 10:
            raise InsufficientExcursionsError("fewer than 10 ladder epochs")
        return EmpiricalRenewalFunction.from_measure(source)
    if _is_skip_free_down(source):
        return LatticeRenewalFunction(source.lattice_span)
    raise ValueError("no exact renewal function for this law; pass a measure")


def renewal_function(source, x):
    """R(x) = mu([0, x]) evaluated through renewal_handle."""
    return renewal_handle(source)(x)


def weak_renewal_function(source, x):
    """Rbar(x): weak-descending renewal mass on [0, x) for x > 0, 1 at 0."""
    x = np.asarray(x, dtype=np.float64)
    if isinstance(source, RenewalMeasure):
        open_mass = source.cdf_open(x)
        return np.where(np.abs(x) <= 1e-12, 1.0,
                        np.where(x < 0, 0.0, open_mass))
    if _is_skip_free_down(source):
        ce = c_equals(source, "exp_series").value
        return LatticeWeakRenewalFunction(source.lattice_span, ce)(x)
    raise ValueError("no exact weak renewal function for this law")


# -- the weak/strict constant ----------------------------------------------------


@dataclass(frozen=True)
class CEqualsResult:
    value: float
    error_bound: float
    method: str
    terms: int


def _lattice_pmf(law):
    levels, probs = law.spine_step_levels()
    lo, hi = int(levels.min()), int(levels.max())
    pmf = np.zeros(hi - lo + 1)
    for lev, p in zip(levels, probs):
        pmf[int(lev) - lo] += p
    return pmf, lo


def _tail_complete(series_v):
    """Complete sum_{n>M} of a positive ~ a n^(-3/2) tail from the last
    nonzero term of the 1-indexed series; returns (tail, bound)."""
    series_v = np.asarray(series_v, dtype=np.float64)
    nz = np.nonzero(series_v > 0)[0]
    if nz.size < 2:
        return 0.0, 0.0
    period = int(nz[-1] - nz[-2])
    n_last = int(nz[-1]) + 1
    a_hat = float(series_v[nz[-1]]) * n_last ** 1.5
    tail = a_hat * period ** -1.5 * float(zeta(1.5, n_last / period + 1.0))
    # the n^(-3/2) model is accurate to relative O(1/n); keep a wide margin
    return tail, 0.1 * tail + abs(a_hat) * n_last ** -2.5


def c_equals(law, method="exp_series", terms=5000) -> CEqualsResult:
    """The weak/strict ladder constant by one of its three expressions.

    Continuous step laws return 1 exactly.  Lattice laws run a level DP
    truncated after `terms` steps; the O(terms^(-1/2)) remainder is
    completed with the n^(-3/2) return-probability asymptotic, and the
    completion's own error is what the bound reports.
    """
    if method not in ("exp_series", "neg_excursion", "pos_excursion"):
        raise ValueError(f"unknown method {method!r}")
    if not law.is_lattice:
        return CEqualsResult(1.0, 0.0, method, 0)
    pmf, lo = _lattice_pmf(law)
    reach = max(-lo, pmf.size - 1 + lo)
    half = terms * reach + pmf.size
    v = np.zeros(2 * half + 1)
    v[half] = 1.0
    if method == "exp_series":
        vals = np.empty(terms)
        for n in range(1, terms + 1):
            v = np.convolve(v, pmf)[-lo: -lo + 2 * half + 1]
            vals[n - 1] = v[half] / n
        partial = csum(vals)
        tail, bound = _tail_complete(vals)
        val = math.exp(partial + tail)
        return CEqualsResult(val, val * bound, method, terms)
    keep_negative = method == "neg_excursion"
    hits = np.empty(terms)
    for n in range(1, terms + 1):
        v = np.convolve(v, pmf)[-lo: -lo + 2 * half + 1]
        hits[n - 1] = v[half]
        # a path contributes at its first arrival at 0 and is then retired,
        # along with everything that left the strict half-line
        if keep_negative:
            v[half:] = 0.0
        else:
            v[: half + 1] = 0.0
    s = csum(hits)
    tail, bound = _tail_complete(hits)
    val = 1.0 / (1.0 - (s + tail))
    return CEqualsResult(val, val * val * bound, method, terms)


# -- survival of the killed walk ---------------------------------------------------


def srw_stay_nonneg_prob(n) -> float:
    """binom(n, floor(n/2)) 2^(-n): closed form for the +-1 walk from 0
    staying >= 0 through step n."""
    n = int(n)
    return math.exp(gammaln(n + 1) - gammaln(n // 2 + 1)
                    - gammaln(n - n // 2 + 1) - n * math.log(2.0))


def survival_probability(law, x, n, method="exact", replicates=100_000,
                         seed=0, experiment_id=0):
    """m_k(x) = P(walk from x stays >= 0 through step k) for k = 0..n.

    exact: lattice level DP from any start x >= 0.  mc: alive frequencies
    over per-replicate simulated walks.
    """
    n = int(n)
    x = float(x)
    if x < 0:
        return np.zeros(n + 1)
    if method == "exact":
        if not law.is_lattice:
            raise ValueError("exact survival needs a lattice law")
        pmf, lo = _lattice_pmf(law)
        span = law.lattice_span
        # level j is alive iff x + j*span >= 0, i.e. j >= kmin; index the
        # state vector by i = j - kmin so killing is the i' >= 0 slice
        kmin = math.ceil(-(x + 1e-9) / span)
        i0 = -kmin
        width = i0 + n * max(pmf.size - 1 + lo, 1) + 1
        v = np.zeros(width)
        v[i0] = 1.0
        out = np.empty(n + 1)
        out[0] = 1.0
        for k in range(1, n + 1):
            # convolve index m = i + t maps to level index i' = m + lo, so
            # the slice starting at -lo keeps exactly the alive states
            v = np.convolve(v, pmf)[-lo: -lo + width]
            out[k] = csum(v)
        return out
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    alive = np.zeros(n + 1)
    for r in range(replicates):
        rng = stream(StreamKey(seed, experiment_id, r, LANE_SPINE))
        walk = x + np.cumsum(law.sample_spine_steps(n, rng))
        alive[1:] += np.minimum.accumulate(walk) >= 0.0
    alive[0] = replicates
    return alive / replicates


# -- the square-root decay constant -------------------------------------------------


@dataclass(frozen=True)
class ThetaReport:
    theta: float
    per_x: np.ndarray          # sqrt(n) m_n(x) / R(x) at the probe horizon
    x_grid: np.ndarray
    n_probe: int
    series_tail_ratio: float   # drift of sqrt(n) m_n(x0) over the last octave
    slope_consistency: float   # theta R(x)/x at the edge over sqrt(2/(pi s2))


def estimate_theta(law, x_grid=None, n_probe=4096, method="exact",
                   replicates=200_000, seed=0, experiment_id=0,
                   renewal=None) -> ThetaReport:
    """Fit theta in m_n(x) ~ theta R(x) / sqrt(n) on a grid of starts.

    theta is the zero-intercept least-squares slope of sqrt(n_probe) *
    m_{n_probe}(x) against R(x).  slope_consistency compares theta R(x)/x
    at the right edge with sqrt(2/(pi sigma^2)), the constant the product
    must approach as x grows.
    """
    if x_grid is None:
        span = law.lattice_span if law.is_lattice else 1.0
        x_grid = span * np.arange(0, 8, dtype=np.float64)
    x_grid = np.asarray(x_grid, dtype=np.float64)
    rfun = renewal_handle(law) if renewal is None else renewal
    r_vals = np.asarray(rfun(x_grid), dtype=np.float64)
    y = np.empty_like(x_grid)
    tail_ratio = 1.0
    for i, x in enumerate(x_grid):
        series = survival_probability(law, x, n_probe, method=method,
                                      replicates=replicates, seed=seed,
                                      experiment_id=experiment_id)
        y[i] = math.sqrt(n_probe) * series[-1]
        if i == 0:
            mid = n_probe // 2
            tail_ratio = (math.sqrt(n_probe) * series[-1]
                          / (math.sqrt(mid) * series[mid]))
    theta = float(np.dot(r_vals, y) / np.dot(r_vals, r_vals))
    edge = float(x_grid[-1])
    target = math.sqrt(2.0 / (math.pi * law.sigma2))
    slope = (theta * float(np.asarray(rfun(edge))) / edge / target
             if edge > 0 else math.nan)
    return ThetaReport(theta=theta, per_x=y / np.maximum(r_vals, 1e-300),
                       x_grid=x_grid, n_probe=n_probe,
                       series_tail_ratio=tail_ratio,
                       slope_consistency=slope)


# -- harmonicity ---------------------------------------------------------------


def harmonicity_residual(law, x, variant="strict", method="exact",
                         renewal=None, samples=200_000, seed=0,
                         experiment_id=0):
    """E[h(x + S_1); not killed] - h(x) for the renewal function.

    variant 'strict': h = R, kill on entering (-inf, 0); 'weak': h = Rbar,
    kill on entering (-inf, 0].  Exact mode enumerates the step law
    (finite support); mc mode averages over sampled steps.
    """
    x = np.asarray(x, dtype=np.float64)
    if variant == "strict":
        h = renewal_handle(law) if renewal is None else renewal
        threshold = -1e-9
    elif variant == "weak":
        if renewal is None:
            ce = c_equals(law, "exp_series").value
            h = LatticeWeakRenewalFunction(law.lattice_span, ce)
        else:
            h = renewal
        threshold = 1e-9
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if method == "exact":
        support, probs = law.spine_step_support()
        pos = x[:, None] + support[None, :]
        vals = np.asarray(h(pos)) * (pos > threshold if variant == "weak"
                                     else pos >= threshold)
        return (vals * probs[None, :]).sum(axis=1) - np.asarray(h(x))
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    rng = stream(StreamKey(seed, experiment_id, 0, LANE_AUX))
    steps = law.sample_spine_steps(samples, rng)
    out = np.empty_like(x)
    for i, xi in enumerate(x):
        pos = xi + steps
        keep = pos > threshold if variant == "weak" else pos >= threshold
        out[i] = float(np.mean(np.asarray(h(pos)) * keep)) - float(
            np.asarray(h(xi)))
    return out


@dataclass(frozen=True)
class GrowthBounds:
    c1: float
    subadditive_ok: bool
    worst_pair_slack: float
    edge_ratio: float          # theta R(x)/x over sqrt(2/(pi s2)) at the edge


def r_growth_bounds(law, x_grid=None, y_grid=None, theta=None,
                    renewal=None, **theta_kw) -> GrowthBounds:
    """Certify R(x) <= c1 (1 + x) and R(x + y) <= c1 (1 + x) R(y) on a
    grid, with c1 the max of R(t)/(1 + t) over the grid and all pairwise
    sums, and report theta R(x)/x against its large-x limit at the edge."""
    span = law.lattice_span if law.is_lattice else 1.0
    if x_grid is None:
        x_grid = span * np.arange(0, 12, dtype=np.float64)
    if y_grid is None:
        y_grid = span * np.arange(0, 12, dtype=np.float64)
    x_grid = np.asarray(x_grid, dtype=np.float64)
    y_grid = np.asarray(y_grid, dtype=np.float64)
    rfun = renewal_handle(law) if renewal is None else renewal
    sums = (x_grid[:, None] + y_grid[None, :]).ravel()
    probe = np.unique(np.concatenate((x_grid, y_grid, sums)))
    c1 = float(np.max(np.asarray(rfun(probe)) / (1.0 + probe)))
    lhs = np.asarray(rfun(sums)).reshape(x_grid.size, y_grid.size)
    rhs = c1 * (1.0 + x_grid)[:, None] * np.asarray(rfun(y_grid))[None, :]
    slack = float(np.min(rhs - lhs))
    if theta is None:
        theta = estimate_theta(law, renewal=rfun, **theta_kw).theta
    edge = float(probe[-1])
    target = math.sqrt(2.0 / (math.pi * law.sigma2))
    edge_ratio = theta * float(np.asarray(rfun(edge))) / edge / target
    return GrowthBounds(c1=c1, subadditive_ok=bool(slack >= -1e-9),
                        worst_pair_slack=slack, edge_ratio=edge_ratio)


# -- Green operator ----------------------------------------------------------------


@dataclass(frozen=True)
class _FExp:
    name: str = "exp"

    def __call__(self, y):
        return np.exp(-np.asarray(y, dtype=np.float64))

    def tail_integral(self, u):
        return math.exp(-max(u, 0.0))


@dataclass(frozen=True)
class _FCauchy:
    name: str = "cauchy"

    def __call__(self, y):
        y = np.asarray(y, dtype=np.float64)
        return 1.0 / (1.0 + y * y)

    def tail_integral(self, u):
        return math.pi / 2.0 - math.atan(max(u, 0.0))


@dataclass(frozen=True)
class FLevel:
    """Indicator of [0, width): Green mass of a window at the origin."""

    width: float
    name: str = "level"

    def __call__(self, y):
        y = np.asarray(y, dtype=np.float64)
        return ((y >= -1e-9) & (y < self.width - 1e-9)).astype(np.float64)

    def tail_integral(self, u):
        return max(self.width - max(u, 0.0), 0.0)


@dataclass(frozen=True)
class FProbe:
    """(1 + y) e^(-y/4): the occupation-sum integrand for the conditioned
    walk probes."""

    name: str = "probe"

    def __call__(self, y):
        y = np.asarray(y, dtype=np.float64)
        return (1.0 + y) * np.exp(-y / 4.0)

    def tail_integral(self, u):
        u = max(u, 0.0)
        return (20.0 + 4.0 * u) * math.exp(-u / 4.0)


@dataclass(frozen=True)
class FTimesR:
    """R(y) f(y), with the linear-growth cap c1 (1 + y) for tail bounds."""

    base: object
    r_func: object
    c1: float
    name: str = "r-times-f"

    def __call__(self, y):
        y = np.asarray(y, dtype=np.float64)
        return np.asarray(self.r_func(y)) * np.asarray(self.base(y))

    def tail_integral(self, u):
        from scipy.integrate import quad
        val, _ = quad(lambda t: self.c1 * (1.0 + t)
                      * float(np.asarray(self.base(np.array([t])))[0]),
                      max(u, 0.0), np.inf)
        return val


F_EXP = _FExp()
F_CAUCHY = _FCauchy()


@dataclass(frozen=True)
class GreenQuery:
    """One evaluation of Gf(x) = sum_n E[f(x + S_n); min_{k<=n} x+S_k >= 0]."""

    x: float
    value: float
    error: float
    method: str
    f_name: str
    paths: int = 0
    unconverged: int = 0


def green_operator(law, x, f, method="path_mc", paths=20_000,
                   max_steps=200_000, seed=0, experiment_id=0,
                   mu=None, muhat=None, ce=None, z_atoms=20_000) -> GreenQuery:
    """Green operator of the walk killed on entering (-inf, 0).

    path_mc sums f along killed trajectories (error: 1.96 SE plus an
    allowance for paths still alive at max_steps).  renewal_formula
    evaluates c= sum_{mu atoms y <= x} sum_{muhat atoms z} f(x - y + z)
    with an analytic bound for the truncated z tail.
    """
    x = float(x)
    if x < -1e-9:
        return GreenQuery(x, 0.0, 0.0, method, getattr(f, "name", "f"))
    if method == "path_mc":
        totals = np.empty(paths)
        alive_at_cap = 0
        cap_tail = 0.0
        for r in range(paths):
            rng = stream(StreamKey(seed, experiment_id, r, LANE_AUX))
            acc = float(np.asarray(f(np.array([x])))[0])
            pos = x
            steps = 0
            alive = True
            block = 512
            while alive and steps < max_steps:
                m = min(block, max_steps - steps)
                block = min(block * 4, 8192)
                walk = pos + np.cumsum(law.sample_spine_steps(m, rng))
                bad = np.nonzero(walk < 0.0)[0]
                stop = int(bad[0]) if bad.size else m
                if stop:
                    acc += float(csum(np.asarray(f(walk[:stop]),
                                                 dtype=np.float64)))
                alive = bad.size == 0
                pos = float(walk[-1])
                steps += m
            if alive:
                alive_at_cap += 1
                cap_tail = max(cap_tail,
                               float(np.asarray(f(np.array([pos])))[0]))
            totals[r] = acc
        value = float(np.mean(totals))
        se = (float(np.std(totals, ddof=1) / math.sqrt(paths))
              if paths > 1 else 0.0)
        return GreenQuery(x, value, 1.96 * se + alive_at_cap * cap_tail,
                          "path_mc", getattr(f, "name", "f"), paths,
                          alive_at_cap)
    if method != "renewal_formula":
        raise ValueError(f"unknown method {method!r}")
    if mu is None:
        mu = exact_lattice_renewal(law, "strict-descending",
                                   upto=max(int(x / law.lattice_span) + 2, 4))
    if muhat is None:
        if _is_skip_free_down(law):
            # ascending heights of the mirrored walk need not be skip-free,
            # but for the shipped two-outcome lattice walk they are
            span = law.lattice_span
            muhat = RenewalMeasure(
                positions=span * np.arange(z_atoms, dtype=np.float64),
                masses=np.full(z_atoms, 1.0), source="strict-ascending",
                exact=True, n_paths=0, epochs_per_path=z_atoms,
                mean_height=span, final_heights=None)
        else:
            raise ValueError("renewal_formula needs mu/muhat measures")
    ce_abs_err = 0.0
    if ce is None:
        ce_res = c_equals(law, "exp_series")
        ce = ce_res.value
        ce_abs_err = ce_res.error_bound
    ysel = mu.positions <= x + 1e-9
    ypos, ymass = mu.positions[ysel], mu.masses[ysel]
    total = 0.0
    for yp, ym in zip(ypos, ymass):
        vals = np.asarray(f(x - yp + muhat.positions), dtype=np.float64)
        total += ym * float(csum(vals * muhat.masses))
    value = ce * total
    zmax = float(muhat.positions[-1])
    dz = (float(muhat.positions[1] - muhat.positions[0])
          if muhat.positions.size > 1 else 1.0)
    mass_rate = float(muhat.masses[-1]) / dz
    tail = 0.0
    if hasattr(f, "tail_integral"):
        for yp, ym in zip(ypos, ymass):
            tail += ym * mass_rate * f.tail_integral(x - yp + zmax)
    tail *= ce
    err = tail + abs(total) * ce_abs_err
    if not muhat.exact:
        err += value * muhat.truncation_bound
    return GreenQuery(x, value, err, "renewal_formula",
                      getattr(f, "name", "f"))


def potential_kernel_probe(law, x_grid, method="path_mc", renewal=None,
                           c1=None, **kw):
    """E+_x[sum_k (1 + X_k) e^(-X_k/4)] = G(R f)(x) / R(x): the conditioned
    walk's expected occupation sum, finite and eventually non-increasing in
    the start height.  Returns (values, error bounds) over x_grid."""
    rfun = renewal_handle(law) if renewal is None else renewal
    x_grid = np.asarray(x_grid, dtype=np.float64)
    if c1 is None:
        probe = np.linspace(0.0, float(x_grid.max()) + 50.0, 512)
        c1 = float(np.max(np.asarray(rfun(probe)) / (1.0 + probe)))
    g = FTimesR(base=FProbe(), r_func=rfun, c1=c1)
    vals = []
    errs = []
    for xv in x_grid:
        q = green_operator(law, float(xv), g, method=method, **kw)
        r = float(np.asarray(rfun(np.array([xv])))[0])
        vals.append(q.value / r)
        errs.append(q.error / r)
    return np.array(vals), np.array(errs)
