"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and repeated in the terminal summary.
"""
import math

import numpy as np
import pytest

from conftest import record
from kuramoto_mfg.analysis import (
    compute_Q,
    fit_envelopes,
    fourth_moment,
    lemma_suites,
    poincare_constant,
    stability_constants,
)
from kuramoto_mfg.dynamic import compute_phi, solve_fp_forward, solve_mfg, time_grid
from kuramoto_mfg.equilibria import (
    asymptotic_fixed_point,
    find_fixed_points,
    self_organizing_solution,
    sweep_fmap,
)
from kuramoto_mfg.ergodic import eval_F, reflect, solve_ergodic
from kuramoto_mfg.grid import integrate, make_grid
from kuramoto_mfg.linearized import fd_fprime, solve_linearized

pytestmark = pytest.mark.acceptance


def test_c01_incoherent_exactness():
    g = make_grid(math.pi, 1024)
    worst = 0.0
    for k in (16.0, 100.0, 1600.0):
        s = solve_ergodic(1.0, k, g)
        worst = max(worst, abs(s.lam), np.max(np.abs(s.u)), np.max(np.abs(s.m - 1 / (2 * math.pi))))
    assert record(1, "incoherent solution exact", worst <= 1e-10, f"max err {worst:.2e}")


def test_c02_critical_slope():
    g = make_grid(math.pi, 2048)
    worst = 0.0
    for k in (16.0, 100.0, 400.0):
        lin = solve_linearized(solve_ergodic(1.0, k, g))
        for val in (lin.fprime_quadratic, lin.fprime_bilinear, fd_fprime(1.0, k, g)):
            worst = max(worst, abs(val / (k / 2) - 1.0))
    assert record(2, "F'(1) = kappa/2 three ways", worst <= 5e-3, f"max rel err {worst:.2e}")


def _five_point(f, a, h):
    if a - 2 * h < 0:
        return (-25 * f(a) + 48 * f(a + h) - 36 * f(a + 2 * h) + 16 * f(a + 3 * h) - 3 * f(a + 4 * h)) / (12 * h)
    return (f(a - 2 * h) - 8 * f(a - h) + 8 * f(a + h) - f(a + 2 * h)) / (12 * h)


def test_c03_lambda_derivative_identity():
    # lambda' from a finite difference of the discrete eigenvalue, not from F
    g = make_grid(math.pi, 1024)
    k = 100.0

    def lam(a):
        return solve_ergodic(a, k, g).lam

    worst = 0.0
    for a in np.linspace(0.0, 1.0, 21):
        d = _five_point(lam, a, 1e-4)
        worst = max(worst, abs(d + k * eval_F(solve_ergodic(a, k, g))))
    assert record(3, "lambda' + kappa F = 0", worst <= 1e-8 * k, f"max {worst / k:.2e} * kappa")


def test_c04_symmetry():
    k = 100.0
    ok, f_err, u_err, l_err = True, 0.0, 0.0, 0.0
    for n in (512, 1024):
        g = make_grid(math.pi, n)
        for a in (0.0, 0.25, 0.5):
            s = solve_ergodic(a, k, g)
            d = solve_ergodic(2.0 - a, k, g, direct=True)
            r = reflect(s)
            f_err = max(f_err, abs(eval_F(d) - (2.0 - eval_F(s))))
            ue = np.max(np.abs(d.u - r.u))
            le = abs(d.lam - (s.lam - 2 * k * (1 - a)))
            ok &= ue <= g.h**2 and le <= g.h**2 * k
            u_err, l_err = max(u_err, ue), max(l_err, le)
    ok &= f_err <= 1e-8
    assert record(4, "F(2-a) = 2 - F(a), u/lambda maps", ok,
                  f"F {f_err:.1e} u {u_err:.1e} lambda {l_err:.1e}")


def test_c05_derivative_scaling():
    g = make_grid(math.pi, 2048)
    a = np.linspace(0.0, 0.95, 20)
    M = {k: max(solve_linearized(solve_ergodic(x, k, g)).fprime_quadratic for x in a) for k in (400.0, 6400.0)}
    ratio = M[6400.0] / M[400.0]
    assert record(5, "max F' scales like kappa^-1/2", 0.125 <= ratio <= 0.5, f"ratio {ratio:.4f}")


def test_c06_steep_region():
    g = make_grid(math.pi, 2048)
    worst = math.inf
    for k in (100.0, 400.0):
        for tau in (0.1, 0.5):
            fp = solve_linearized(solve_ergodic(1.0 - tau / k, k, g)).fprime_quadratic
            worst = min(worst, fp / k)
    assert record(6, "F'(1 - tau/kappa) >= kappa/4", worst >= 0.25, f"min F'/kappa {worst:.4f}")


def test_c07_fixed_point_structure():
    g = make_grid(math.pi, 1024)
    ok, detail = True, []
    for k in (50.0, 100.0, 400.0):
        rep = find_fixed_points(sweep_fmap(k, 41, g), g)
        ok &= rep.three_point_structure() and max(abs(r) for r in rep.residuals) <= 1e-10
        detail.append(f"k={k:g}: {len(rep.fixed_points)} pts")
        if k == 400.0:
            oracle = asymptotic_fixed_point(k)
            rel = abs(rep.self_organizing[0] - oracle) / oracle
            ok &= rel <= 0.10
            detail.append(f"oracle rel {rel:.1e}")
    assert record(7, "three fixed points {a, 1, 2-a}", ok, ", ".join(detail))


def test_c08_eigenvalue_asymptotics():
    g = make_grid(math.pi, 4096)
    k = 1e4
    worst = 0.0
    for a in (0.0, 0.5):
        s = solve_ergodic(a, k, g)
        worst = max(worst, abs(s.eigenvalue / math.sqrt(k) / (math.sqrt(1 - a) / 2) - 1))
    assert record(8, "ground eigenvalue ~ sqrt(kappa (1-a))/2", worst <= 0.02, f"max rel {worst:.2e}")


def test_c09_envelopes():
    g = make_grid(math.pi, 2048)
    sols = [solve_ergodic(a, k, g) for k in (100.0, 400.0, 1600.0) for a in (0.0, 0.5, 0.9)]
    lins = [solve_linearized(s) for s in sols]
    rep = fit_envelopes(sols, lins)
    ok = rep.feasible and rep.slack.get("v", -1) >= -1e-9
    assert record(9, "envelopes feasible with one constant set", ok,
                  f"c1={rep.c1:.3g} c2={rep.c2:.3g} ell={rep.ell_fit:.3g}")


def test_c10_poincare():
    g = make_grid(12.0, 4096)
    cp_gauss = poincare_constant(g, np.exp(-0.5 * g.x**2))
    gp = make_grid(math.pi, 2048)
    cp = {k: stability_constants(self_organizing_solution(k, gp)).C_P for k in (100.0, 1600.0)}
    ratio = cp[100.0] / cp[1600.0]
    ok = abs(cp_gauss - 1.0) <= 0.02 and 2 / 3 <= ratio <= 1.5
    assert record(10, "Poincare constant calibrated and uniform", ok,
                  f"gauss {cp_gauss:.5f} ratio {ratio:.4f}")


def test_c11_fourth_moment():
    g = make_grid(12.0, 4096)
    w = np.exp(-0.5 * g.x**2)
    q_gauss = fourth_moment(g, w / integrate(g, w))
    gp = make_grid(math.pi, 2048)
    qs = [compute_Q(self_organizing_solution(k, gp)) for k in (100.0, 400.0, 1600.0)]
    ok = abs(q_gauss / 3.0 - 1.0) <= 5e-3 and max(qs) / min(qs) <= 2.0
    assert record(11, "Q calibrated and uniform", ok,
                  f"gauss {q_gauss:.6f} spread {max(qs) / min(qs):.4f}")


def test_c12_discrete_stationarity():
    g = make_grid(math.pi, 256)
    st = self_organizing_solution(100.0, g)
    traj = solve_mfg(g, st.m, st.u, 100.0, 0.5, tol=1e-13, theta=1.0, guess=st.m)
    phi_max = float(np.max(compute_phi(traj, st).phi))
    assert record(12, "stationary data is a discrete fixed point", phi_max <= 1e-10,
                  f"max Phi {phi_max:.2e}")


def test_c13_turnpike(turnpike_run):
    rep = turnpike_run.report
    c = rep.checks
    ok = (c["domination_hypothesis"]["passed"] and c["integral_inequality"]["passed"]
          and c["window_decay"]["passed"] and rep.omega_fit > 0)
    assert record(13, "turnpike run estimates", ok,
                  f"pairs {c['integral_inequality']['pairs']} C {c['integral_inequality']['C']:.3g}, "
                  f"window C {c['window_decay']['C']:.3g} ({c['window_decay']['source']}), "
                  f"omega_fit {rep.omega_fit:.3g}")


def test_c14_duality(turnpike_run):
    c = turnpike_run.report.checks["duality"]
    assert record(14, "duality identity along the run", c["passed"],
                  f"max {c['max_residual']:.2e} tol {c['tolerance']:.2e}")


def test_c15_lemma_suites():
    res = lemma_suites(seed=2024)
    ok = all(v["passed"] for v in res.values())
    assert record(15, "decay lemma suites", ok, ", ".join(f"{k} {'ok' if v['passed'] else 'FAIL'}" for k, v in res.items()))


def test_c16_fokker_planck(turnpike_run):
    g = make_grid(math.pi, 128)
    dt = g.h**2 / 2
    t = time_grid(2.0, dt)
    m0 = (1.0 + 0.5 * np.cos(g.x)) / (2 * math.pi)
    m = solve_fp_forward(g, np.zeros((t.size, g.n_cells)), m0, t[1] - t[0])
    amp = g.h * (m @ np.cos(g.x))
    rel = float(np.max(np.abs(amp / amp[0] / np.exp(-t) - 1.0)))
    mass = g.h * m.sum(axis=1)
    step = float(np.max(np.abs(np.diff(mass))))
    res = turnpike_run.report.details["residuals"]
    positive = bool(np.min(m) > 0 and res["min_m"] > 0)
    ok = rel <= 0.02 and step <= 1e-14 and res["mass_step"] <= 1e-14 and positive
    assert record(16, "Fokker-Planck decay, mass, positivity", ok,
                  f"decay rel {rel:.2e} mass/step {max(step, res['mass_step']):.1e}")
