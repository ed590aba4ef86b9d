import math

import numpy as np
import pytest

from kuramoto_mfg.equilibria import (
    FMapTable,
    asymptotic_fixed_point,
    estimate_threshold,
    find_fixed_points,
    iterate_map,
    self_organizing_level,
    sweep_fmap,
)
from kuramoto_mfg.grid import make_grid


@pytest.fixture(scope="module")
def g():
    return make_grid(math.pi, 512)


def test_table_validation():
    with pytest.raises(ValueError):
        FMapTable(1.0, np.array([0.0, 0.5, 0.4]), np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        FMapTable(1.0, np.array([0.0, 0.5]), np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        FMapTable(1.0, np.array([0.0, 2.5]), np.zeros(2), np.zeros(2))


def test_sweep_is_mirrored_and_monotone(g):
    tab = sweep_fmap(100.0, 11, g, extra=(0.97, 3.0))
    assert tab.a_samples[0] == 0.0 and tab.a_samples[-1] == 2.0
    assert 0.97 in tab.a_samples and 2.0 - 0.97 in np.round(tab.a_samples, 15)
    assert tab.monotone()
    assert tab.symmetry_error() <= 1e-12
    with pytest.raises(ValueError):
        sweep_fmap(100.0, 10, g)


def test_parallel_sweep_is_identical(g):
    a = sweep_fmap(50.0, 11, g)
    b = sweep_fmap(50.0, 11, g, workers=2)
    assert np.array_equal(a.F_values, b.F_values)
    assert np.array_equal(a.Fprime_values, b.Fprime_values)


def test_three_fixed_points_at_strong_coupling(g):
    rep = find_fixed_points(sweep_fmap(100.0, 21, g), g)
    assert rep.three_point_structure()
    lo, one, hi = rep.points
    assert one == 1.0 and lo + hi == pytest.approx(2.0, abs=1e-14)
    assert max(abs(r) for r in rep.residuals) <= 1e-10
    assert rep.contraction_bound < 1.0
    assert rep.near_one_slope >= 0.25 * 100
    d = rep.to_dict()
    assert [p["kind"] for p in d["fixed_points"]] == ["self_organizing", "incoherent", "self_organizing"]


def test_only_incoherent_below_threshold(g):
    rep = find_fixed_points(sweep_fmap(1.0, 21, g), g)
    assert rep.points == [1.0]
    assert not rep.three_point_structure()


def test_asymptotic_root():
    a = asymptotic_fixed_point(400.0)
    assert a == pytest.approx(0.5 / math.sqrt(400.0 * (1 - a)), abs=1e-14)
    with pytest.raises(ValueError):
        asymptotic_fixed_point(0.5)


def test_threshold_estimate(g):
    est, counts = estimate_threshold([1.0, 4.0, 20.0, 100.0], g, n_samples=21)
    assert est == 4.0
    assert counts[1.0] == 1 and counts[100.0] == 3


@pytest.mark.parametrize("ks", [[4.0], [4.0, 2.0, 100.0], [10.0, 100.0], [1.0, 50.0]])
def test_threshold_input_validation(g, ks):
    with pytest.raises(ValueError):
        estimate_threshold(ks, g)


def test_picard_iteration_contracts(g):
    it = iterate_map(100.0, g, a0=0.0)
    assert it.converged
    assert it.iterates[-1] == pytest.approx(self_organizing_level(100.0, g), abs=1e-10)
    assert np.nanmax(it.rates) < 0.1
