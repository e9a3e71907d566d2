"""Size-biased spinal construction and its verification probes.

Under the size-biased change of measure the population carries a
distinguished line of descent (the spine): reproduction along the spine is
drawn from the tilted law with density sum_i exp(-x_i), the next spine
particle is chosen among the children proportionally to exp(-X), and the
spine increments form a centered random walk with variance sigma^2 per
step.  The many-to-one identity

    E_x[sum_{|u|=n} exp(-X_u) H(u)] = exp(-x) E*_x[H(spine_n)]

is checked here by paired Monte Carlo routes and, on lattice laws, by two
exact recursions.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .brw import ensemble_leaf_functional, exact_tree_functional, run_brw
from .errors import SizeBiasError
from .numerics import csum
from .offspring import _finite_tables
from .rng import LANE_SPINE, LANE_TREE, StreamKey, stream

__all__ = [
    "SpinePath",
    "sample_size_biased",
    "run_spinal_brw",
    "spine_decomposition_identity",
    "exact_spine_functional",
    "many_to_one_check",
    "ManyToOneReport",
    "sample_p_plus",
    "PPlusEnsemble",
    "pplus_weight_profile",
    "bessel3_time1_cdf",
    "weighted_ks_bessel",
]

_REJECTION_CAP = 10**6
_WALK_CHUNK = 4096


# -- one reproduction event under the tilt -------------------------------------


def _size_biased_atoms(law):
    """Joint atoms (cum prob, outcome index, child index) of the tilted
    reproduction event with its spine choice; masses p_o * exp(-x_i) sum
    to 1 by the boundary normalization."""
    probs, weights = [], []
    for o, (p, disp) in enumerate(zip(law.outcome_probs, law.outcome_disps)):
        for i, d in enumerate(disp):
            probs.append(p * math.exp(-d))
            weights.append((o, i))
    cum = np.cumsum(probs)
    cum /= cum[-1]
    return cum, weights


_ATOM_CACHE = {}


def sample_size_biased(law, rng):
    """One tilted reproduction event: (child displacements, spine index)."""
    if law.kind == "gaussian-binary":
        m, mu, s2 = law.params
        s = math.sqrt(s2)
        idx = int(rng.integers(0, int(m)))
        disp = mu + s * rng.standard_normal(int(m))
        disp[idx] = s * rng.standard_normal()  # tilted child: Normal(mu - s2, s2)
        return disp, idx
    if law.kind == "two-point":
        cum, pairs = _ATOM_CACHE.get(law) or _ATOM_CACHE.setdefault(
            law, _size_biased_atoms(law)
        )
        k = int(np.searchsorted(cum, rng.random(), side="right"))
        o, i = pairs[min(k, len(pairs) - 1)]
        return np.array(law.outcome_disps[o]), i
    return _sample_custom_rejected(law, rng)


def _sample_custom_rejected(law, rng):
    """Rejection against the base law; envelope = max outcome weight, so the
    acceptance rate is 1/envelope by the boundary normalization."""
    probs, lens, flat, offsets = _finite_tables(law)
    bound = law.max_outcome_weight()
    for _ in range(_REJECTION_CAP):
        o = int(rng.choice(len(probs), p=probs))
        disp = flat[offsets[o]: offsets[o] + lens[o]]
        e = np.exp(-disp)
        w = float(e.sum())
        if w <= 0.0:
            continue
        if rng.random() * bound <= w:
            cum = np.cumsum(e)
            i = int(np.searchsorted(cum, rng.random() * w, side="right"))
            return disp.copy(), min(i, disp.size - 1)
    raise SizeBiasError("size-biasing failed: rejection cap exhausted")


# -- spinal realization ----------------------------------------------------------


@dataclass
class SpinePath:
    """Spine trajectory with the sibling data needed to regrow the tree."""

    x: float
    positions: np.ndarray            # spine positions, generations 0..n
    children: list = field(default_factory=list)   # absolute child positions per step
    chosen: list = field(default_factory=list)     # spine child index per step
    pplus_weight: float | None = None

    @property
    def horizon(self) -> int:
        return self.positions.size - 1

    def spine_min(self) -> float:
        return float(self.positions.min())


def run_spinal_brw(law, x, n, rng) -> SpinePath:
    positions = [float(x)]
    children, chosen = [], []
    for _ in range(int(n)):
        disp, idx = sample_size_biased(law, rng)
        abs_children = positions[-1] + np.asarray(disp, dtype=np.float64)
        children.append(abs_children)
        chosen.append(int(idx))
        positions.append(float(abs_children[idx]))
    return SpinePath(float(x), np.array(positions), children, chosen)


def spine_decomposition_identity(path, law, rng):
    """Evaluate both sides of the killed-martingale spine decomposition on
    one realization.

    The off-spine subtrees are grown forward so that both sides see the
    same tree: the left side recomputes W'_n directly over all generation-n
    particles; the right side sums the spine leaf term and the per-subtree
    killed martingales weighted by their lineage-prefix indicators.  The two
    sides agree up to summation order.
    """
    n = path.horizon
    spine_alive = 1.0 if path.spine_min() >= 0.0 else 0.0
    spine_term = spine_alive * math.exp(-path.positions[n])
    rhs_terms = [spine_term]
    lhs_parts = [np.array([spine_term])]
    for k in range(n):
        prefix_min = float(path.positions[: k + 1].min())
        for i, y in enumerate(path.children[k]):
            if i == path.chosen[k]:
                continue
            series, final = run_brw(law, float(y), n - k - 1, rng, keep_final=True)
            alive_prefix = 1.0 if min(prefix_min, y) >= 0.0 else 0.0
            rhs_terms.append(alive_prefix * series.Wprime[-1])
            lineage_min = np.minimum(prefix_min, final.path_mins)
            lhs_parts.append(
                np.exp(-final.positions) * (lineage_min >= 0.0)
            )
    lhs = csum(np.concatenate(lhs_parts))
    rhs = math.fsum(rhs_terms)
    return lhs, rhs


# -- exact spine recursion (lattice) ---------------------------------------------


def exact_spine_functional(x, n, law, H) -> float:
    """Exact E*_x[H(X_n, min_{k<=n} X_k)] for lattice spine walks."""
    levels, probs = law.spine_step_levels()
    span = law.lattice_span
    x = float(x)
    states = {(0, 0): 1.0}
    for _ in range(int(n)):
        new = {}
        for (lev, mlev), p in states.items():
            for dl, pl in zip(levels, probs):
                nl = lev + int(dl)
                key = (nl, min(mlev, nl))
                new[key] = new.get(key, 0.0) + p * pl
        states = new
    pos = np.array([x + k * span for k, _ in states])
    mins = np.array([x + m * span for _, m in states])
    masses = np.array(list(states.values()))
    return float(csum(masses * H(pos, mins)))


# -- many-to-one -----------------------------------------------------------------


@dataclass(frozen=True)
class ManyToOneReport:
    x: float
    n: int
    functional: str
    tree_mean: float
    tree_se: float
    spine_mean: float
    spine_se: float
    exact_tree: float | None
    exact_spine: float | None
    replicates: int

    @property
    def combined_se(self) -> float:
        return math.hypot(self.tree_se, self.spine_se)

    @property
    def diff_in_se(self) -> float:
        se = self.combined_se
        return abs(self.tree_mean - self.spine_mean) / se if se > 0 else math.inf


def _spine_walk_functional(law, x, n, replicates, seed, experiment_id, H):
    pos = np.empty(replicates)
    mins = np.empty(replicates)
    for r in range(replicates):
        rng = stream(StreamKey(seed, experiment_id, r, LANE_SPINE))
        steps = law.sample_spine_steps(int(n), rng)
        walk = x + np.cumsum(steps)
        pos[r] = walk[-1]
        mins[r] = min(x, float(walk.min()))
    return H(pos, mins)


def many_to_one_check(law, x, n, H, replicates, seed, experiment_id=0,
                      threads=1) -> ManyToOneReport:
    """Paired estimate of both sides of the many-to-one identity."""
    tree_vals = ensemble_leaf_functional(
        law, x, n, replicates, seed, H, experiment_id=experiment_id,
        lane=LANE_TREE, threads=threads,
    )
    spine_vals = math.exp(-x) * _spine_walk_functional(
        law, x, n, replicates, seed, experiment_id, H
    )
    exact_tree = exact_spine = None
    if law.has_finite_support and law.is_lattice:
        exact_tree = exact_tree_functional(x, n, law, H)
        exact_spine = math.exp(-x) * exact_spine_functional(x, n, law, H)
    return ManyToOneReport(
        x=float(x), n=int(n), functional=getattr(H, "name", "custom"),
        tree_mean=float(tree_vals.mean()),
        tree_se=float(tree_vals.std(ddof=1) / math.sqrt(replicates)),
        spine_mean=float(spine_vals.mean()),
        spine_se=float(spine_vals.std(ddof=1) / math.sqrt(replicates)),
        exact_tree=exact_tree, exact_spine=exact_spine,
        replicates=int(replicates),
    )


# -- conditioned walk via importance weights --------------------------------------


@dataclass
class PPlusEnsemble:
    """Weighted spine ensemble targeting the walk conditioned to stay >= 0.

    weights are the unnormalized Radon-Nikodym factors
    R(X_n) 1{min >= 0} / R(x); their mean estimates 1 at every n by
    harmonicity.  Killed paths carry weight exactly 0 (early termination is
    exact, not a truncation).
    """

    x: float
    n: int
    replicates: int
    final_positions: np.ndarray
    weights: np.ndarray

    @property
    def ess(self) -> float:
        s = self.weights.sum()
        q = float(np.square(self.weights).sum())
        return float(s * s / q) if q > 0 else 0.0

    @property
    def low_ess(self) -> bool:
        return self.ess < 100.0


def _walk_chunk(args):
    (law, x, n, seed, experiment_id, rep_start, count, checkpoints, r_func) = args
    ck = np.asarray(checkpoints, dtype=np.int64)
    weights = np.zeros((count, ck.size))
    finals = np.full(count, np.nan)
    block = 1024
    # Lattice walks started on the lattice run in integer level units: the
    # killing test sits exactly on a lattice level, where a long float
    # cumsum revisiting the barrier can land one ulp below it.
    scale = 1.0
    start = float(x)
    to_levels = None
    if law.is_lattice:
        lev = x / law.lattice_span
        if abs(lev - round(lev)) < 1e-9:
            scale = law.lattice_span
            start = int(round(lev))

            def to_levels(steps, span=law.lattice_span):
                return np.rint(steps / span).astype(np.int64)

    for j in range(count):
        rng = stream(StreamKey(seed, experiment_id, rep_start + j, LANE_SPINE))
        pos, run_min, done = start, start, 0
        if run_min < 0:
            continue
        alive = True
        while done < n and alive:
            m = min(block, n - done)
            steps = law.sample_spine_steps(m, rng)
            if to_levels is not None:
                steps = to_levels(steps)
            walk = pos + np.cumsum(steps)
            cmin = np.minimum(run_min, np.minimum.accumulate(walk))
            sel = (ck > done) & (ck <= done + m)
            if sel.any():
                idx = ck[sel] - done - 1
                ok = cmin[idx] >= 0
                weights[j, sel] = np.where(ok, r_func(scale * walk[idx]), 0.0)
            if cmin[-1] < 0:
                alive = False
                finals[j] = np.nan
            else:
                pos = walk[-1]
                run_min = cmin[-1]
            done += m
        if alive:
            finals[j] = scale * pos
    if 0 in set(int(c) for c in checkpoints):
        weights[:, list(checkpoints).index(0)] = r_func(np.full(count, x)) * (x >= 0.0)
    return weights, finals


def _run_walk_chunks(law, x, n, replicates, seed, experiment_id, checkpoints,
                     r_func, threads):
    batches = [
        (law, float(x), int(n), int(seed), int(experiment_id), r0,
         min(_WALK_CHUNK, replicates - r0), tuple(checkpoints), r_func)
        for r0 in range(0, replicates, _WALK_CHUNK)
    ]
    if threads <= 1 or len(batches) == 1:
        out = [_walk_chunk(b) for b in batches]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(_walk_chunk, batches, chunksize=1))
    weights = np.concatenate([o[0] for o in out])
    finals = np.concatenate([o[1] for o in out])
    return weights, finals


def sample_p_plus(law, x, n, replicates, seed, r_func, experiment_id=0,
                  threads=1) -> PPlusEnsemble:
    """Importance-weighted ensemble for the Doob-conditioned spine walk."""
    rx = float(r_func(np.array([float(x)]))[0])
    if rx <= 0.0:
        raise ValueError("conditioning requires R(x) > 0, i.e. x >= 0")
    weights, finals = _run_walk_chunks(
        law, x, n, replicates, seed, experiment_id, [int(n)], r_func, threads
    )
    return PPlusEnsemble(
        x=float(x), n=int(n), replicates=int(replicates),
        final_positions=finals, weights=weights[:, 0] / rx,
    )


def pplus_weight_profile(law, x, n_grid, replicates, seed, r_func,
                         experiment_id=0, threads=1):
    """Mean and SE of the unnormalized conditioning weight at each n.

    Harmonicity of R for the killed walk makes every column mean 1.
    """
    n_grid = sorted(int(v) for v in n_grid)
    rx = float(r_func(np.array([float(x)]))[0])
    weights, _ = _run_walk_chunks(
        law, x, max(n_grid), replicates, seed, experiment_id, n_grid, r_func,
        threads,
    )
    weights = weights / rx
    means = weights.mean(axis=0)
    ses = weights.std(axis=0, ddof=1) / math.sqrt(replicates)
    return np.array(n_grid), means, ses


# -- Bessel(3) reference -----------------------------------------------------------


_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def bessel3_time1_cdf(z):
    """Time-1 marginal of the three-dimensional Bessel process from 0."""
    z = np.asarray(z, dtype=np.float64)
    out = erf(z / math.sqrt(2.0)) - _SQRT_2_OVER_PI * z * np.exp(-z * z / 2.0)
    return np.where(z <= 0.0, 0.0, out)


def weighted_ks_bessel(ensemble, sigma2) -> float:
    """Weighted KS distance between X_n/(sigma sqrt(n)) and the Bessel(3)
    time-1 marginal."""
    alive = ensemble.weights > 0.0
    if not alive.any():
        return 1.0
    z = ensemble.final_positions[alive] / math.sqrt(sigma2 * ensemble.n)
    w = ensemble.weights[alive]
    order = np.argsort(z)
    z, w = z[order], w[order]
    cw = np.cumsum(w) / w.sum()
    target = bessel3_time1_cdf(z)
    lower = np.abs(np.concatenate(([0.0], cw[:-1])) - target)
    upper = np.abs(cw - target)
    return float(max(lower.max(), upper.max()))
