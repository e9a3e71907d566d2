"""Flat-array branching random walk simulator and exact small-tree oracles.

Particles live in flat numpy arrays; the genealogy is never stored.  Each
particle carries its position, the running minimum over its whole ancestor
line, and the running minimum over ancestors from generation k0 on (+inf
until generation k0 exists).  The three additive series

    W_n  = sum exp(-X_u)
    D_n  = sum X_u exp(-X_u)
    W'_n = sum exp(-X_u) 1{lineage min >= 0}
    W''_n = sum exp(-X_u) 1{lineage min from k0 on >= 0}

are accumulated per generation.  Killed particles are not pruned: the
indicator rides along with the running minimum, so one population serves
all four series.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import OutcomeExplosionError, PopulationOverflowError
from .numerics import csum, segment_min, segment_sums
from .rng import LANE_TREE, StreamKey, stream

__all__ = [
    "DEFAULT_CAP",
    "ParticleArray",
    "MartingaleSeries",
    "initial_state",
    "step_generation",
    "run_brw",
    "run_brw_ensemble",
    "ensemble_leaf_functional",
    "BrwEnsemble",
    "enumerate_exact",
    "exact_tree_functional",
    "H_CONST",
    "H_SURVIVAL",
    "HLaplace",
    "HWindow",
]

DEFAULT_CAP = 2**27
_BATCH_TARGET = 2**21  # flat particles per ensemble batch


@dataclass
class ParticleArray:
    """One generation of particles (one realization)."""

    positions: np.ndarray
    path_mins: np.ndarray
    path_mins_after_k0: np.ndarray
    generation: int
    k0: int

    @property
    def size(self) -> int:
        return self.positions.size


@dataclass
class MartingaleSeries:
    """Per-generation additive series of one realization."""

    x: float
    k0: int
    W: np.ndarray
    D: np.ndarray
    Wprime: np.ndarray
    Wsecond: np.ndarray
    gen_min: np.ndarray

    @property
    def horizon(self) -> int:
        return self.W.size - 1


def initial_state(x, k0=0) -> ParticleArray:
    x = float(x)
    pm2 = x if k0 == 0 else np.inf
    return ParticleArray(
        positions=np.array([x]),
        path_mins=np.array([x]),
        path_mins_after_k0=np.array([pm2]),
        generation=0,
        k0=int(k0),
    )


def step_generation(state, law, rng, cap=DEFAULT_CAP) -> ParticleArray:
    """Advance one generation; extinction is absorbing (empty stays empty)."""
    n = state.size
    g = state.generation + 1
    if n == 0:
        empty = np.empty(0)
        return ParticleArray(empty, empty.copy(), empty.copy(), g, state.k0)
    counts, disp = law.sample_children_batch(n, rng)
    total = disp.size
    if total > cap:
        raise PopulationOverflowError(total, cap, g)
    pos = np.repeat(state.positions, counts) + disp
    pm = np.minimum(np.repeat(state.path_mins, counts), pos)
    if g < state.k0:
        pm2 = np.full(total, np.inf)
    elif g == state.k0:
        pm2 = pos.copy()
    else:
        pm2 = np.minimum(np.repeat(state.path_mins_after_k0, counts), pos)
    return ParticleArray(pos, pm, pm2, g, state.k0)


def _series_row(state):
    if state.size == 0:
        return 0.0, 0.0, 0.0, 0.0, np.inf
    e = np.exp(-state.positions)
    w = csum(e)
    d = csum(state.positions * e)
    wp = csum(e * (state.path_mins >= 0.0))
    ws = csum(e * (state.path_mins_after_k0 >= 0.0))
    return w, d, wp, ws, float(state.positions.min())


def run_brw(law, x, n, rng, k0=0, cap=DEFAULT_CAP, keep_final=False):
    """Simulate one realization to horizon n; series plus optionally the
    final ParticleArray."""
    state = initial_state(x, k0)
    rows = [_series_row(state)]
    for _ in range(n):
        state = step_generation(state, law, rng, cap=cap)
        rows.append(_series_row(state))
    w, d, wp, ws, gmin = (np.array(col) for col in zip(*rows))
    series = MartingaleSeries(float(x), int(k0), w, d, wp, ws, gmin)
    if keep_final:
        return series, state
    return series


# -- replicate ensembles -------------------------------------------------------


@dataclass
class BrwEnsemble:
    """Per-replicate series, replicate index along axis 0."""

    law_kind: str
    x: float
    k0: int
    horizon: int
    replicates: int
    seed: int
    W: np.ndarray
    D: np.ndarray
    Wprime: np.ndarray
    Wsecond: np.ndarray
    gen_min: np.ndarray


def _batch_size(law, n):
    growth = max(1.0, law.mean_offspring()) ** min(n, 40)
    per_rep = min(max(growth, 1.0), float(_BATCH_TARGET))
    return max(1, int(_BATCH_TARGET // per_rep))


def _batch_streams(law, x, n, k0, seed, experiment_id, lane, rep_start, count):
    return [
        stream(StreamKey(seed, experiment_id, rep_start + i, lane))
        for i in range(count)
    ]


def _simulate_batch(args):
    """One contiguous block of replicates, vectorized across the block.

    Each replicate draws from its own stream and its sums accumulate in
    within-replicate order, so per-replicate output is bit-identical no
    matter how replicates are grouped into batches or workers.
    """
    (law, x, n, k0, seed, experiment_id, lane, rep_start, count, cap, mode, H) = args
    streams = _batch_streams(law, x, n, k0, seed, experiment_id, lane, rep_start, count)
    b = count
    pos = np.full(b, float(x))
    pm = pos.copy()
    pm2 = pos.copy() if k0 == 0 else np.full(b, np.inf)
    alive = np.arange(b)  # replicate index per particle, sorted
    out = {
        name: np.zeros((b, n + 1)) for name in ("W", "D", "Wprime", "Wsecond")
    }
    gen_min = np.full((b, n + 1), np.inf)

    def record(g):
        e = np.exp(-pos)
        out["W"][:, g] = segment_sums(e, alive, b)
        out["D"][:, g] = segment_sums(pos * e, alive, b)
        out["Wprime"][:, g] = segment_sums(e * (pm >= 0.0), alive, b)
        out["Wsecond"][:, g] = segment_sums(e * (pm2 >= 0.0), alive, b)
        gen_min[:, g] = segment_min(pos, alive, b)

    if mode == "series":
        record(0)
    for g in range(1, n + 1):
        rep_particles = np.bincount(alive, minlength=b)
        parts_counts, parts_disp = [], []
        for r in range(b):
            npar = int(rep_particles[r])
            if npar == 0:
                continue
            c, d = law.sample_children_batch(npar, streams[r])
            parts_counts.append(c)
            parts_disp.append(d)
        if not parts_counts:
            break
        ccounts = np.concatenate(parts_counts)
        disp = np.concatenate(parts_disp)
        if disp.size > cap:
            raise PopulationOverflowError(disp.size, cap, g)
        pos = np.repeat(pos, ccounts) + disp
        alive = np.repeat(alive, ccounts)
        pm = np.minimum(np.repeat(pm, ccounts), pos)
        if g < k0:
            pm2 = np.full(pos.size, np.inf)
        elif g == k0:
            pm2 = pos.copy()
        else:
            pm2 = np.minimum(np.repeat(pm2, ccounts), pos)
        if mode == "series":
            record(g)
    if mode == "series":
        return out, gen_min
    values = np.exp(-pos) * H(pos, pm)
    return segment_sums(values, alive, b)


def _run_batches(law, x, n, replicates, seed, k0, experiment_id, lane, threads, cap,
                 mode, H=None):
    bsize = _batch_size(law, n)
    batches = [
        (law, float(x), int(n), int(k0), int(seed), int(experiment_id), int(lane),
         r0, min(bsize, replicates - r0), cap, mode, H)
        for r0 in range(0, replicates, bsize)
    ]
    if threads <= 1 or len(batches) == 1:
        results = [_simulate_batch(b) for b in batches]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_simulate_batch, batches, chunksize=1))
    return results


def run_brw_ensemble(law, x, n, replicates, seed, k0=0, experiment_id=0,
                     lane=LANE_TREE, threads=1, cap=DEFAULT_CAP) -> BrwEnsemble:
    """Independent replicates of run_brw, batched and optionally parallel.

    Replicate r draws from StreamKey(seed, experiment_id, r, lane); results
    are identical for any thread count.
    """
    results = _run_batches(law, x, n, replicates, seed, k0, experiment_id, lane,
                           threads, cap, mode="series")
    series = {name: np.concatenate([r[0][name] for r in results])
              for name in ("W", "D", "Wprime", "Wsecond")}
    gen_min = np.concatenate([r[1] for r in results])
    return BrwEnsemble(
        law_kind=law.kind, x=float(x), k0=int(k0), horizon=int(n),
        replicates=int(replicates), seed=int(seed),
        W=series["W"], D=series["D"], Wprime=series["Wprime"],
        Wsecond=series["Wsecond"], gen_min=gen_min,
    )


def ensemble_leaf_functional(law, x, n, replicates, seed, H, k0=0,
                             experiment_id=0, lane=LANE_TREE, threads=1,
                             cap=DEFAULT_CAP) -> np.ndarray:
    """Per-replicate sum over generation-n particles of exp(-X_u) H(u).

    H is called with (positions, lineage minima) arrays.
    """
    results = _run_batches(law, x, n, replicates, seed, k0, experiment_id, lane,
                           threads, cap, mode="leaf", H=H)
    return np.concatenate(results)


# -- leaf functionals ----------------------------------------------------------


@dataclass(frozen=True)
class _ConstH:
    name: str = "const"

    def __call__(self, pos, pmin):
        return np.ones_like(pos)


@dataclass(frozen=True)
class _SurvivalH:
    name: str = "survival"

    def __call__(self, pos, pmin):
        return (pmin >= 0.0).astype(np.float64)


@dataclass(frozen=True)
class HLaplace:
    lam: float
    name: str = "laplace"

    def __call__(self, pos, pmin):
        return np.exp(-self.lam * pos)


@dataclass(frozen=True)
class HWindow:
    """Indicator of the final position lying in [lo, hi)."""

    lo: float
    hi: float
    name: str = "window"

    def __call__(self, pos, pmin):
        return ((pos >= self.lo) & (pos < self.hi)).astype(np.float64)


H_CONST = _ConstH()
H_SURVIVAL = _SurvivalH()


# -- exact small-tree oracles --------------------------------------------------


def _lattice_outcome_levels(law):
    span = law.lattice_span
    return tuple(
        tuple(int(round(d / span)) for d in disp) for disp in law.outcome_disps
    )


def enumerate_exact(x, n, law, cap=10**7):
    """Exact joint distribution of (W_n, D_n, W'_n) for finite-support laws.

    Returns (probs, W, D, Wprime) arrays, one row per atom.  Lattice laws
    enumerate over integer displacement levels with subtree memoization;
    non-lattice finite-support laws fall back to uncached recursion.  The
    atom count is capped.
    """
    if not law.has_finite_support:
        raise ValueError("finite-support law required for exact enumeration")
    x = float(x)
    if law.is_lattice:
        atoms = _enumerate_lattice(x, int(n), law, cap)
    else:
        atoms = _enumerate_general(x, int(n), law, cap)
    probs = np.array([a[3] for a in atoms])
    w = np.array([a[0] for a in atoms])
    d = np.array([a[1] for a in atoms])
    wp = np.array([a[2] for a in atoms])
    order = np.lexsort((wp, d, w))
    return probs[order], w[order], d[order], wp[order]


def _merge(dist, key_w, key_d, key_p, w, d, p, prob):
    key = (key_w, key_d, key_p)
    if key in dist:
        dist[key] = (dist[key][0], dist[key][1], dist[key][2], dist[key][3] + prob)
    else:
        dist[key] = (w, d, p, prob)


def _convolve(da, db, cap):
    out = {}
    for (wa, da_, pa, qa) in da.values():
        for (wb, db_, pb, qb) in db.values():
            w, d, p, q = wa + wb, da_ + db_, pa + pb, qa * qb
            _merge(out, round(w, 10), round(d, 10), round(p, 10), w, d, p, q)
            if len(out) > cap:
                raise OutcomeExplosionError("outcome explosion in exact enumeration")
    return out


def _enumerate_lattice(x, n, law, cap):
    span = law.lattice_span
    outcome_levels = _lattice_outcome_levels(law)
    probs = law.outcome_probs
    # smallest integer level with x + l*span >= 0 (snap tolerance on the grid)
    lmin = math.ceil(-(x + 1e-9) / span)

    @lru_cache(maxsize=None)
    def subtree(level, depth):
        pos = x + level * span
        if depth == 0:
            e = math.exp(-pos)
            wp = e if level >= lmin else 0.0
            return {(round(e, 10), round(pos * e, 10), round(wp, 10)):
                    (e, pos * e, wp, 1.0)}
        dist = {}
        for po, levels in zip(probs, outcome_levels):
            acc = {(0.0, 0.0, 0.0): (0.0, 0.0, 0.0, 1.0)}
            for dl in levels:
                acc = _convolve(acc, subtree(level + dl, depth - 1), cap)
            for (w, d, p, q) in acc.values():
                _merge(dist, round(w, 10), round(d, 10), round(p, 10),
                       w, d, p, q * po)
            if len(dist) > cap:
                raise OutcomeExplosionError("outcome explosion in exact enumeration")
        if level < lmin:
            # lineage already broken at this node: W' vanishes below here
            killed = {}
            for (w, d, _, q) in dist.values():
                _merge(killed, round(w, 10), round(d, 10), 0.0, w, d, 0.0, q)
            return killed
        return dist

    return list(subtree(0, n).values())


def _enumerate_general(x, n, law, cap):
    probs = law.outcome_probs
    disps = law.outcome_disps

    def subtree(pos, depth):
        if depth == 0:
            e = math.exp(-pos)
            wp = e if pos >= -1e-12 else 0.0
            return {(round(e, 10), round(pos * e, 10), round(wp, 10)):
                    (e, pos * e, wp, 1.0)}
        dist = {}
        for po, disp in zip(probs, disps):
            acc = {(0.0, 0.0, 0.0): (0.0, 0.0, 0.0, 1.0)}
            for dd in disp:
                acc = _convolve(acc, subtree(pos + dd, depth - 1), cap)
            for (w, d, p, q) in acc.values():
                _merge(dist, round(w, 10), round(d, 10), round(p, 10),
                       w, d, p, q * po)
            if len(dist) > cap:
                raise OutcomeExplosionError("outcome explosion in exact enumeration")
        if pos < -1e-12:
            killed = {}
            for (w, d, _, q) in dist.values():
                _merge(killed, round(w, 10), round(d, 10), 0.0, w, d, 0.0, q)
            return killed
        return dist

    return list(subtree(float(x), n).values())


def exact_tree_functional(x, n, law, H) -> float:
    """Exact E_x[sum_{|u|=n} exp(-X_u) H(X_u, lineage min)] for lattice laws.

    Recursion over the expected exp(-X) mass per (level, lineage-min-level)
    state; states collapse on the lattice so the cost is polynomial in n.
    """
    if not (law.has_finite_support and law.is_lattice):
        raise ValueError("finite-support lattice law required")
    span = law.lattice_span
    outcome_levels = _lattice_outcome_levels(law)
    probs = law.outcome_probs
    x = float(x)
    # per-child displacement intensity: level -> sum_o p_o (count of level in o)
    intensity = {}
    for po, levels in zip(probs, outcome_levels):
        for dl in levels:
            intensity[dl] = intensity.get(dl, 0.0) + po
    states = {(0, 0): math.exp(-x)}  # (level, min level) -> expected mass
    for _ in range(int(n)):
        new = {}
        for (lev, mlev), mass in states.items():
            for dl, mult in intensity.items():
                nl = lev + dl
                key = (nl, min(mlev, nl))
                new[key] = new.get(key, 0.0) + mass * mult * math.exp(-dl * span)
        states = new
    levels = np.array([k[0] for k in states], dtype=np.float64)
    mins = np.array([k[1] for k in states], dtype=np.float64)
    masses = np.array(list(states.values()))
    hvals = H(x + levels * span, x + mins * span)
    return float(csum(masses * hvals))
