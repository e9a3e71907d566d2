"""Tree simulation against the exact small-horizon enumeration."""

import math

import numpy as np
import pytest

from brwlab import brw
from brwlab.brw import (
    H_CONST,
    H_SURVIVAL,
    HLaplace,
    HWindow,
    enumerate_exact,
    ensemble_leaf_functional,
    exact_tree_functional,
    run_brw_ensemble,
)
from brwlab.errors import PopulationOverflowError
from brwlab.offspring import TWO_POINT_A


def test_enumeration_is_a_probability_law(two_point):
    for n in (1, 2, 3):
        probs, w, d, wp = enumerate_exact(0.0, n, two_point)
        assert abs(probs.sum() - 1.0) < 1e-12
        assert np.all(probs > 0)
        # killed mass never exceeds the full additive mass
        assert np.all(wp <= w + 1e-12)


@pytest.mark.parametrize("x", [0.0, TWO_POINT_A, 2 * TWO_POINT_A])
def test_enumeration_martingale_expectations(two_point, x):
    # E_x[W_n] = e^{-x} and E_x[D_n] = x e^{-x} exactly, every horizon
    for n in (1, 2, 3):
        probs, w, d, _ = enumerate_exact(x, n, two_point)
        assert abs(float(probs @ w) - math.exp(-x)) < 1e-12
        assert abs(float(probs @ d) - x * math.exp(-x)) < 1e-12


def test_exact_functional_matches_enumeration_atoms(two_point):
    for n in (1, 2, 3):
        probs, w, _, wp = enumerate_exact(0.0, n, two_point)
        assert abs(exact_tree_functional(0.0, n, two_point, H_CONST)
                   - float(probs @ w)) < 1e-12
        assert abs(exact_tree_functional(0.0, n, two_point, H_SURVIVAL)
                   - float(probs @ wp)) < 1e-12


def test_exact_functional_rejects_non_lattice(gaussian):
    with pytest.raises(ValueError):
        exact_tree_functional(0.0, 3, gaussian, H_CONST)


def test_ensemble_thread_invariance(two_point):
    a = run_brw_ensemble(two_point, 0.0, 6, replicates=64, seed=7, threads=1)
    b = run_brw_ensemble(two_point, 0.0, 6, replicates=64, seed=7, threads=3)
    for name in ("W", "D", "Wprime", "Wsecond", "gen_min"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name


def test_ensemble_series_shapes_and_initials(two_point):
    x, n, reps = 0.7, 5, 32
    ens = run_brw_ensemble(two_point, x, n, replicates=reps, seed=3)
    assert ens.W.shape == (reps, n + 1)
    assert np.allclose(ens.W[:, 0], math.exp(-x))
    assert np.allclose(ens.D[:, 0], x * math.exp(-x))
    assert np.allclose(ens.gen_min[:, 0], x)
    # the generation-g front minimum lives on x + a Z, at most g steps down
    a = TWO_POINT_A
    levels = (ens.gen_min - x) / a
    assert np.all(np.abs(levels - np.rint(levels)) < 1e-9)
    assert np.all(levels >= -np.arange(n + 1) - 1e-9)


def test_killed_mass_orderings(two_point):
    ens0 = run_brw_ensemble(two_point, 0.0, 8, replicates=256, seed=11, k0=0)
    assert np.all(ens0.Wprime <= ens0.W + 1e-12)
    assert np.array_equal(ens0.Wsecond, ens0.Wprime)
    ens2 = run_brw_ensemble(two_point, 0.0, 8, replicates=256, seed=11, k0=2)
    # delaying the barrier to generation k0 only adds mass
    assert np.all(ens2.Wsecond >= ens2.Wprime - 1e-12)


def test_leaf_functional_const_recovers_final_mass(two_point):
    ens = run_brw_ensemble(two_point, 0.0, 6, replicates=128, seed=5)
    vals = ensemble_leaf_functional(two_point, 0.0, 6, replicates=128, seed=5,
                                    H=H_CONST)
    assert np.array_equal(vals, ens.W[:, -1])


def test_leaf_functional_survival_recovers_killed_mass(two_point):
    ens = run_brw_ensemble(two_point, 0.0, 6, replicates=128, seed=5)
    vals = ensemble_leaf_functional(two_point, 0.0, 6, replicates=128, seed=5,
                                    H=H_SURVIVAL)
    assert np.allclose(vals, ens.Wprime[:, -1])


def test_window_and_laplace_functionals(two_point):
    a = TWO_POINT_A
    n = 3
    probs, _, _, _ = enumerate_exact(0.0, n, two_point)
    # window selecting everything == const; empty window == 0
    full = exact_tree_functional(0.0, n, two_point, HWindow(-10 * a, 10 * a))
    assert abs(full - exact_tree_functional(0.0, n, two_point, H_CONST)) < 1e-12
    assert exact_tree_functional(0.0, n, two_point, HWindow(50 * a, 60 * a)) == 0.0
    # Laplace at lam=0 degenerates to const
    lam0 = exact_tree_functional(0.0, n, two_point, HLaplace(0.0))
    assert abs(lam0 - exact_tree_functional(0.0, n, two_point, H_CONST)) < 1e-12


def test_monte_carlo_matches_enumeration_mean(two_point):
    reps, n = 20_000, 3
    ens = run_brw_ensemble(two_point, 0.0, n, replicates=reps, seed=99)
    probs, w, d, wp = enumerate_exact(0.0, n, two_point)
    for series, atoms in ((ens.W, w), (ens.D, d), (ens.Wprime, wp)):
        sample = series[:, -1]
        se = sample.std(ddof=1) / math.sqrt(reps)
        assert abs(sample.mean() - float(probs @ atoms)) < 4 * max(se, 1e-15)


def test_population_cap_overflow(two_point):
    with pytest.raises(PopulationOverflowError) as info:
        run_brw_ensemble(two_point, 0.0, 20, replicates=64, seed=1, cap=2048)
    err = info.value
    assert err.size > err.cap
    assert 0 < err.generation <= 20
