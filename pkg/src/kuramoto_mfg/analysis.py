"""Stability constants, envelope fits and the two appendix lemmas as checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.linalg import eigvalsh_tridiagonal
from scipy.optimize import linprog

from .ergodic import ErgodicSolution, eval_F, rescale
from .grid import Grid1D, diff_neumann, integrate, laplacian_neumann

# l for the bump psi(x) = sqrt(2) sin(pi x) on [0, 1]:
# int psi'^2 + (x^2/4) psi^2 = pi^2 + 1/12 - 1/(8 pi^2)
ELL_BUMP = math.pi**2 + 1.0 / 12.0 - 1.0 / (8.0 * math.pi**2)


# ---------------------------------------------------------------- constants


def _weighted_operator(grid: Grid1D, weight: np.ndarray):
    """Symmetric form of ``f -> -(w f')'/w`` with geometric face weights."""
    w = np.asarray(weight, dtype=float)
    if w.shape != (grid.n_cells,):
        raise ValueError("weight must live on the grid")
    if np.any(~(w > 0)):
        raise ValueError("weight must be strictly positive")
    lw = np.log(w)
    # sqrt(w_{i+1}/w_i) on faces, kept in log space for tiny tails
    r = np.exp(0.5 * (lw[1:] - lw[:-1]))
    h2 = grid.h**2
    diag = np.zeros(grid.n_cells)
    diag[:-1] += r
    diag[1:] += 1.0 / r
    return diag / h2, np.full(grid.n_cells - 1, -1.0 / h2)


def poincare_constant(grid: Grid1D, weight: np.ndarray) -> float:
    """Weighted Poincare constant ``C_P = 1/gap`` for the density ``weight``.

    ``gap`` is the smallest nonzero eigenvalue of ``sum_f w_f (Df)^2 h`` over
    ``sum_i w_i f_i^2 h`` with face weight ``sqrt(w_i w_{i+1})``; after the
    ground-state transform this is a symmetric tridiagonal matrix whose
    lowest eigenvalue is zero with eigenvector ``sqrt(w)``.
    """
    d, e = _weighted_operator(grid, weight)
    vals = eigvalsh_tridiagonal(d, e, select="i", select_range=(0, 1))
    return 1.0 / float(vals[1])


def dirichlet_form(grid: Grid1D, weight: np.ndarray, f: np.ndarray) -> float:
    """``sum_f sqrt(w_i w_{i+1}) (Df)^2 h``, the energy used by :func:`poincare_constant`."""
    w = np.asarray(weight, dtype=float)
    wf = np.exp(0.5 * (np.log(w[1:]) + np.log(w[:-1])))
    df = np.diff(f) / grid.h
    return float(grid.h * np.sum(wf * df**2))


def fourth_moment(grid: Grid1D, weight: np.ndarray) -> float:
    return integrate(grid, grid.x**4 * weight)


def compute_Q(sol: ErgodicSolution, both: bool = False):
    """``Q = kappa int x^4 m`` on the physical grid; with ``both`` also the rescaled value."""
    phys = sol.kappa * fourth_moment(sol.grid, sol.m)
    if not both:
        return phys
    r = rescale(sol)
    return phys, fourth_moment(r.grid, r.mu)


@dataclass(frozen=True)
class StabilityConstants:
    kappa: float
    C_P: float
    Q: float

    @property
    def c_dom(self) -> float:
        return math.sqrt(self.C_P / self.Q)

    @property
    def base(self) -> float:
        return self.C_P + 1.0 / self.C_P + 1.0 / self.Q

    @property
    def C_turnpike(self) -> float:
        return 16.0 * self.base

    @property
    def omega(self) -> float:
        return math.log(2.0) / self.C_turnpike * self.kappa**0.25

    @property
    def C_integral(self) -> float:
        """Constant of the rescaled integral inequality, ``4 (C_P + 1/C_P + 1/Q) kappa^{1/4}``."""
        return 4.0 * self.base * self.kappa**0.25

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "C_P": self.C_P,
            "Q": self.Q,
            "c_dom": self.c_dom,
            "C_turnpike": self.C_turnpike,
            "omega": self.omega,
            "C_integral": self.C_integral,
        }


def stability_constants(sol: ErgodicSolution) -> StabilityConstants:
    r = rescale(sol)
    return StabilityConstants(sol.kappa, poincare_constant(r.grid, r.mu), compute_Q(sol))


# ----------------------------------------------------------- appendix lemmas


@dataclass
class DecayCheck:
    C: float
    omega: float
    window_times: np.ndarray
    averages: np.ndarray
    bounds: np.ndarray
    hypothesis_ok: bool
    violations: list
    pairs_checked: int
    ok: bool | None  # None when the hypothesis failed and nothing was asserted

    @property
    def worst_ratio(self) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(self.bounds > 0, self.averages / self.bounds, 0.0)
        return float(np.max(r, initial=0.0))


def _pairs(n, max_full, n_random, rng):
    if n <= max_full:
        i, j = np.triu_indices(n, k=1)
        return i, j
    rng = np.random.default_rng(rng)
    i = rng.integers(0, n, n_random)
    j = rng.integers(0, n, n_random)
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    keep = lo < hi
    return lo[keep], hi[keep]


def integral_inequality_pairs(times, phi, C, i, j, cumulative=None, rtol=1e-9, atol=1e-300):
    """Boolean mask of pairs with ``int_{t_i}^{t_j} phi <= C (phi_i + phi_j)``."""
    t = np.asarray(times, dtype=float)
    p = np.asarray(phi, dtype=float)
    cum = cumulative_trapezoid(p, t, initial=0.0) if cumulative is None else np.asarray(cumulative)
    lhs = cum[j] - cum[i]
    rhs = C * (p[i] + p[j])
    return lhs <= rhs * (1.0 + rtol) + atol, lhs, rhs


def decay_from_integral_inequality(
    times,
    phi,
    C: float,
    *,
    cumulative=None,
    max_full_pairs: int = 2000,
    n_random_pairs: int = 1_000_000,
    rng=0,
    rtol: float = 1e-9,
) -> DecayCheck:
    """Exponential decay of window averages from an integral inequality.

    If ``int_{t1}^{t2} phi <= C (phi(t1) + phi(t2))`` for every sampled pair
    and ``T >= 8C``, then for ``t <= T - 4C`` the average of ``phi`` over
    ``[t, t + 4C]`` is at most ``4 (e^{-w t} + e^{-w (T - t)}) (phi(0) + phi(T))``
    with ``w = log 2 / (4C)``. The hypothesis is checked on all pairs when the
    series is short, on random pairs otherwise; the bound is only asserted
    when the hypothesis held. ``cumulative`` may supply exact running
    integrals in place of the trapezoid rule.
    """
    t = np.asarray(times, dtype=float)
    p = np.asarray(phi, dtype=float)
    if t.ndim != 1 or t.shape != p.shape or t.size < 2:
        raise ValueError("times and phi must be 1D arrays of equal length >= 2")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    if np.any(p < 0):
        raise ValueError("phi must be nonnegative")
    if not C > 0:
        raise ValueError("C must be positive")
    t0, T = t[0], t[-1] - t[0]
    if T < 8.0 * C * (1 - 1e-12):
        raise ValueError(f"horizon {T:.6g} is shorter than 8C = {8 * C:.6g}")
    cum = cumulative_trapezoid(p, t, initial=0.0) if cumulative is None else np.asarray(cumulative, float)

    i, j = _pairs(t.size, max_full_pairs, n_random_pairs, rng)
    good, lhs, rhs = integral_inequality_pairs(t, p, C, i, j, cumulative=cum, rtol=rtol)
    bad = np.nonzero(~good)[0]
    violations = [(float(t[i[k]]), float(t[j[k]]), float(lhs[k]), float(rhs[k])) for k in bad[:20]]

    omega = math.log(2.0) / (4.0 * C)
    s = t - t0
    sel = s <= T - 4.0 * C + 1e-12 * T
    ws = s[sel]
    avg = (np.interp(ws + 4.0 * C, s, cum) - cum[sel]) / (4.0 * C)
    bounds = 4.0 * (np.exp(-omega * ws) + np.exp(-omega * (T - ws))) * (p[0] + p[-1])
    hyp = bad.size == 0
    ok = bool(np.all(avg <= bounds * (1.0 + rtol) + 1e-300)) if hyp else None
    return DecayCheck(C, omega, ws + t0, avg, bounds, hyp, violations, int(i.size), ok)


def empirical_integral_constant(times, phi, max_samples: int = 2000, margin: float = 1.05) -> float:
    """Smallest ``C`` (times ``margin``) making the integral inequality hold on a thinned series."""
    t = np.asarray(times, dtype=float)
    p = np.asarray(phi, dtype=float)
    cum = cumulative_trapezoid(p, t, initial=0.0)
    idx = np.unique(np.linspace(0, t.size - 1, min(max_samples, t.size)).astype(int))
    c, q = cum[idx], p[idx]
    i, j = np.triu_indices(idx.size, k=1)
    den = q[i] + q[j]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, (c[j] - c[i]) / den, 0.0)
    return margin * float(np.max(ratio))


@dataclass(frozen=True)
class PointwiseBound:
    bound: float
    max_square: float
    lipschitz: float
    integral: float
    ok: bool


def pointwise_from_average(times, f, lipschitz_bound: float | None = None, literal: bool = False) -> PointwiseBound:
    """Sup of ``f^2`` from its integral and a Lipschitz bound.

    With ``A`` the mean of ``f`` over ``[t1, t2]`` (mean value theorem) the bound
    is ``2 L (t2 - t1) A + A^2``. ``literal=True`` uses ``2 L (t2 - t1) I + I^2``
    with the raw integral ``I``, which dominates the mean form only when
    ``t2 - t1 >= 1``.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(f, dtype=float)
    if t.shape != y.shape or t.size < 2 or np.any(np.diff(t) <= 0):
        raise ValueError("times must be increasing and match f")
    if np.any(y < 0):
        raise ValueError("f must be nonnegative")
    slope = float(np.max(np.abs(np.diff(y) / np.diff(t))))
    L = slope if lipschitz_bound is None else float(lipschitz_bound)
    if L < slope * (1 - 1e-12):
        raise ValueError(f"lipschitz_bound {L} is below the observed slope {slope}")
    length = t[-1] - t[0]
    integral = float(trapezoid(y, t))
    if literal:
        if length < 1.0:
            raise ValueError("the literal form needs an interval of length >= 1")
        bound = 2.0 * L * length * integral + integral**2
    else:
        avg = integral / length
        bound = 2.0 * L * length * avg + avg**2
    peak = float(np.max(y) ** 2)
    return PointwiseBound(bound, peak, L, integral, bool(peak <= bound * (1 + 1e-12)))


def cosh_profile(rho: float, T: float, n: int = 4001):
    """``cosh(rho (t - T/2))`` on ``[0, T]`` with its exact running integral.

    Satisfies the integral inequality with ``C = 1/rho`` since
    ``|sinh a - sinh b| <= cosh a + cosh b``.
    """
    t = np.linspace(0.0, T, n)
    c = 0.5 * T
    phi = np.cosh(rho * (t - c))
    cum = (np.sinh(rho * (t - c)) - np.sinh(-rho * c)) / rho
    return t, phi, cum


def random_piecewise_linear(rng, n_knots: int | None = None):
    """Nonnegative piecewise-linear function sampled finely between random knots."""
    k = int(n_knots or rng.integers(2, 12))
    length = float(rng.uniform(0.1, 5.0))
    knots = np.sort(np.concatenate([[0.0, length], rng.uniform(0.0, length, k - 2)]))
    knots = np.unique(knots)
    vals = rng.uniform(0.0, 3.0, knots.size) * (rng.random(knots.size) > 0.2)
    t = np.unique(np.concatenate([knots, np.linspace(0.0, length, 257)]))
    return t, np.interp(t, knots, vals)


def lemma_suites(seed: int = 0, n_cosh: int = 20, n_pl: int = 100) -> dict:
    """Randomized checks of the two decay lemmas; every entry has a ``passed`` flag."""
    rng = np.random.default_rng(seed)
    out = {}
    worst = 0.0
    ok = True
    for _ in range(n_cosh):
        rho = float(rng.uniform(0.2, 5.0))
        T = float(rng.uniform(8.0, 20.0)) / rho
        t, phi, cum = cosh_profile(rho, T)
        d = decay_from_integral_inequality(t, phi, 1.0 / rho, cumulative=cum, rng=rng)
        ok &= bool(d.hypothesis_ok and d.ok)
        worst = max(worst, d.worst_ratio)
    out["cosh_family"] = {"passed": ok, "cases": n_cosh, "worst_ratio": worst}

    ok, worst = True, 0.0
    for _ in range(n_pl):
        t, f = random_piecewise_linear(rng)
        pb = pointwise_from_average(t, f)
        ok &= pb.ok
        if pb.bound > 0:
            worst = max(worst, pb.max_square / pb.bound)
    out["piecewise_linear"] = {"passed": ok, "cases": n_pl, "worst_ratio": worst}

    t = np.linspace(0.0, 10.0, 101)
    z = np.zeros_like(t)
    d = decay_from_integral_inequality(t, z, 1.0)
    pb = pointwise_from_average(t, z)
    out["zero_inputs"] = {
        "passed": bool(d.hypothesis_ok and d.ok and pb.ok and pb.bound == 0.0),
    }
    return out


# ----------------------------------------------------------------- envelopes


@dataclass
class EnvelopeReport:
    c1: float
    c2: float
    c3: float
    log_C: float
    ell_fit: float
    ell_bump: float
    F_scaled: float
    cbar1: float | None = None
    cbar2: float | None = None
    slack: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        ok = self.c1 > 0 and self.ell_fit <= self.ell_bump
        return bool(ok and all(s >= -1e-9 for s in self.slack.values()))

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()} | {"feasible": self.feasible}


def _check_interior(sol, delta):
    if sol.a > 1.0 - delta + 1e-12:
        raise ValueError(f"envelopes need a <= 1 - delta = {1 - delta}, got a = {sol.a}")


def _u_rows(sol):
    X = math.sqrt(sol.kappa) * sol.grid.x**2
    logm = sol.log_m
    q = 0.25 * math.log(sol.kappa)
    one, zero = np.ones_like(X), np.zeros_like(X)
    # columns c1, c2, c3, logC; rows A p <= b
    A = np.vstack([
        np.column_stack([X, zero, -one, zero]),
        np.column_stack([zero, -X, -one, zero]),
        np.column_stack([X, zero, zero, -one]),
        np.column_stack([zero, -X, zero, -one]),
    ])
    b = np.concatenate([sol.u, -sol.u, q - logm, logm - q])
    return A, b


def envelope_slack(report: EnvelopeReport, sols, lins=()) -> dict:
    """Worst slack of each nodewise inequality for the given constants (negative = violated)."""
    p = np.array([report.c1, report.c2, report.c3, report.log_C])
    out = {"u_lower": math.inf, "u_upper": math.inf, "m_upper": math.inf, "m_lower": math.inf,
           "lam": math.inf}
    for s in sols:
        A, b = _u_rows(s)
        r = (b - A @ p).reshape(4, -1).min(axis=1)
        for k, v in zip(["u_lower", "u_upper", "m_upper", "m_lower"], r):
            out[k] = min(out[k], float(v))
        out["lam"] = min(out["lam"], report.ell_bump * math.sqrt(s.kappa) - s.lam, s.lam)
    if lins and report.cbar1 is not None:
        out["v"] = min(
            float(np.min(report.cbar1 * math.sqrt(l.base.kappa) * l.grid.x**2 + report.cbar2 - np.abs(l.v)))
            for l in lins
        )
    return out


def fit_envelopes(sols, lins=(), delta: float = 0.05, margin: float = 0.0) -> EnvelopeReport:
    """One set of envelope constants valid at every node of every input.

    Solves small linear programs with the nodewise inequalities as hard
    constraints: ``c1`` is pushed up and ``c2``, ``c3``, ``log C`` down for
    the value/density bounds, and ``cbar1 + cbar2`` is minimized for ``|v|``.
    A positive ``margin`` loosens the fitted constants by that relative
    amount (and additively for the offsets) before they are reported.
    """
    sols = list(sols)
    lins = list(lins)
    if not sols:
        raise ValueError("need at least one solution")
    for s in sols:
        _check_interior(s, delta)
    rows = [_u_rows(s) for s in sols]
    A = np.vstack([r[0] for r in rows])
    b = np.concatenate([r[1] for r in rows])
    res = linprog(c=[-1.0, 1.0, 1.0, 1.0], A_ub=A, b_ub=b, bounds=[(0, None)] * 4, method="highs")
    if res.status != 0:
        raise RuntimeError(f"envelope program failed: {res.message}")
    c1, c2, c3, logC = (float(v) for v in res.x)
    c1, c2, c3, logC = c1 * (1 - margin), c2 * (1 + margin), c3 + margin, logC + margin

    cb1 = cb2 = None
    if lins:
        for l in lins:
            _check_interior(l.base, delta)
        X = np.concatenate([math.sqrt(l.base.kappa) * l.grid.x**2 for l in lins])
        av = np.concatenate([np.abs(l.v) for l in lins])
        Av = np.column_stack([-X, -np.ones_like(X)])
        rv = linprog(c=[1.0, 1.0], A_ub=Av, b_ub=-av, bounds=[(0, None)] * 2, method="highs")
        if rv.status != 0:
            raise RuntimeError(f"v envelope program failed: {rv.message}")
        cb1, cb2 = (float(v) * (1 + margin) for v in rv.x)
        cb2 += margin

    rep = EnvelopeReport(
        c1=c1, c2=c2, c3=c3, log_C=logC,
        ell_fit=max(s.lam / math.sqrt(s.kappa) for s in sols),
        ell_bump=ELL_BUMP,
        F_scaled=max(eval_F(s) * math.sqrt(s.kappa) for s in sols),
        cbar1=cb1, cbar2=cb2,
    )
    rep.slack = envelope_slack(rep, sols, lins)
    return rep


def log_density_slope(sol: ErgodicSolution, width: float | None = None) -> float:
    """Least-squares slope of ``log m`` against ``x^2`` near the peak.

    ``width`` defaults to two standard deviations of the Gaussian
    approximation ``exp(-sqrt(kappa (1-a)) x^2 / 2)``.
    """
    x = sol.grid.x
    if width is None:
        width = 2.0 * (sol.kappa * max(1.0 - sol.a, 1e-12)) ** -0.25
    sel = np.abs(x) <= width
    return float(np.polyfit(x[sel] ** 2, sol.log_m[sel], 1)[0])


# ----------------------------------------------------------------- Lyapunov


@dataclass(frozen=True)
class LyapunovResult:
    beta: float
    gamma: float
    feasible: bool
    vacuous: bool
    radius: float


def verify_lyapunov(grid: Grid1D, w_bar: np.ndarray, r: float) -> LyapunovResult:
    """Test ``-phi'' + phi' w_x >= beta phi - gamma 1_{|x|<r}`` with ``phi = w - w(0) + 1``."""
    if not r > 0:
        raise ValueError("radius must be positive")
    w = np.asarray(w_bar, dtype=float)
    phi = w - w[grid.center_index] + 1.0
    lhs = -laplacian_neumann(grid, phi) + diff_neumann(grid, phi) * diff_neumann(grid, w)
    outside = np.abs(grid.x) >= r
    if not np.any(outside):
        gamma = float(np.max(np.maximum(-lhs, 0.0)))
        return LyapunovResult(0.0, gamma, False, True, r)
    beta = float(np.min(lhs[outside] / phi[outside]))
    inside = ~outside
    gamma = float(np.max(np.maximum(beta * phi[inside] - lhs[inside], 0.0), initial=0.0))
    return LyapunovResult(beta, gamma, beta > 0, False, r)


def lyapunov_radius(ell: float, fraction: float = 0.5) -> float:
    """Radius with ``fraction * r^2 / 12 >= ell``, so ``x^2/12 - ell`` keeps a fixed share of ``x^2/12`` outside."""
    return math.sqrt(12.0 * ell / fraction)


__all__ = [
    "ELL_BUMP",
    "poincare_constant",
    "dirichlet_form",
    "fourth_moment",
    "compute_Q",
    "StabilityConstants",
    "stability_constants",
    "DecayCheck",
    "decay_from_integral_inequality",
    "integral_inequality_pairs",
    "empirical_integral_constant",
    "PointwiseBound",
    "cosh_profile",
    "random_piecewise_linear",
    "lemma_suites",
    "pointwise_from_average",
    "EnvelopeReport",
    "fit_envelopes",
    "envelope_slack",
    "log_density_slope",
    "LyapunovResult",
    "verify_lyapunov",
    "lyapunov_radius",
]
