"""Randomized invariants checked with hypothesis."""
import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from kuramoto_mfg.analysis import (
    cosh_profile,
    decay_from_integral_inequality,
    dirichlet_form,
    poincare_constant,
    pointwise_from_average,
)
from kuramoto_mfg.dynamic import bernoulli, solve_fp_forward
from kuramoto_mfg.ergodic import eval_F, solve_ergodic
from kuramoto_mfg.grid import integrate, make_grid
from kuramoto_mfg.io import write_csv

G = make_grid(math.pi, 256)
SETTINGS = settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])

levels = st.floats(0.0, 2.0, allow_nan=False)
couplings = st.floats(0.5, 500.0, allow_nan=False)


@SETTINGS
@given(a=levels, k=couplings)
def test_density_invariants(a, k):
    s = solve_ergodic(a, k, G)
    assert np.all(s.m > 0)
    assert abs(integrate(G, s.m) - 1) < 1e-12
    assert 0.0 < eval_F(s) < 2.0
    assert s.lam >= -1e-9 if a <= 1 else s.lam <= 1e-9


@SETTINGS
@given(a=st.floats(0.0, 1.0), k=couplings)
def test_half_period_symmetry(a, k):
    f = eval_F(solve_ergodic(a, k, G))
    f2 = eval_F(solve_ergodic(2.0 - a, k, G, direct=True))
    assert abs(f2 - (2.0 - f)) < 1e-8


@SETTINGS
@given(a1=levels, a2=levels, k=couplings)
def test_F_monotone(a1, a2, k):
    lo, hi = sorted((a1, a2))
    assert eval_F(solve_ergodic(lo, k, G)) <= eval_F(solve_ergodic(hi, k, G)) + 1e-12


@SETTINGS
@given(z=st.floats(-50, 50))
def test_bernoulli_identity(z):
    b = bernoulli(np.array([z, -z]))
    assert abs(b[0] - b[1] + z) <= 1e-12 * max(1.0, abs(z))
    assert b[0] > 0


@SETTINGS
@given(seed=st.integers(0, 2**32 - 1), amp=st.floats(0.0, 20.0), dt=st.floats(1e-4, 1.0))
def test_fp_step_conserves_mass_and_sign(seed, amp, dt):
    g = make_grid(math.pi, 64)
    rng = np.random.default_rng(seed)
    u = amp * np.cumsum(rng.normal(size=(3, 64)), axis=1) / 8
    m0 = rng.uniform(0.01, 1.0, 64)
    m0 /= g.h * m0.sum()
    m = solve_fp_forward(g, u, m0, dt)
    assert np.all(m > 0)
    assert np.max(np.abs(g.h * m.sum(axis=1) - 1.0)) < 1e-13


@SETTINGS
@given(seed=st.integers(0, 2**32 - 1), width=st.floats(0.3, 3.0))
def test_poincare_bound_for_random_functions(seed, width):
    g = make_grid(6.0, 128)
    w = np.exp(-0.5 * (g.x / width) ** 2)
    w /= integrate(g, w)
    cp = poincare_constant(g, w)
    f = np.random.default_rng(seed).normal(size=128).cumsum()
    var = integrate(g, w * (f - integrate(g, w * f)) ** 2)
    assert var <= cp * dirichlet_form(g, w, f) * (1 + 1e-9) + 1e-300


@SETTINGS
@given(rho=st.floats(0.1, 10.0), k=st.floats(8.0, 20.0))
def test_cosh_family_decay(rho, k):
    t, phi, cum = cosh_profile(rho, k / rho, n=1001)
    d = decay_from_integral_inequality(t, phi, 1.0 / rho, cumulative=cum, rng=0)
    assert d.hypothesis_ok and d.ok


@SETTINGS
@given(vals=st.lists(st.floats(0.0, 100.0), min_size=2, max_size=30), length=st.floats(0.01, 50.0))
def test_pointwise_bound_random_samples(vals, length):
    t = np.linspace(0.0, length, len(vals))
    assert pointwise_from_average(t, np.array(vals)).ok


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(vals=st.lists(st.floats(-1e300, 1e300, allow_nan=False), min_size=1, max_size=20))
def test_csv_round_trip_is_exact(tmp_path, vals):
    p = write_csv(tmp_path / "r.csv", {"v": vals})
    back = np.atleast_1d(np.loadtxt(p, delimiter=",", skiprows=1))
    assert np.array_equal(back, np.array(vals, dtype=float))
