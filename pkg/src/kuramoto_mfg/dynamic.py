"""Finite-horizon forward-backward system on the physical scale.

    -u_t - u_xx + |u_x|^2/2 = b(t) V(x),    b(t) = kappa (1 - int V m(t)),
     m_t - m_xx - (m u_x)_x = 0,             m(0) = m0,  u(T) = uT,

with Neumann conditions. The backward equation is linear in ``phi = exp(-u/2)``
(``phi_t + phi_xx = b V phi / 2``) and is stepped implicitly. The forward
equation uses an implicit Scharfetter-Gummel finite-volume scheme whose
stationary states are exactly the discrete Gibbs densities ``exp(-u)/Z``.
The two are coupled by a damped fixed-point loop on ``m``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_banded

from .analysis import StabilityConstants, stability_constants
from .ergodic import ErgodicSolution
from .grid import (
    Grid1D,
    diff_neumann,
    eval_potential,
    has_parity,
    integrate_rows,
    laplacian_bands,
    laplacian_neumann,
)


class PositivityError(RuntimeError):
    pass


@dataclass
class DynamicTrajectory:
    grid: Grid1D
    kappa: float
    times: np.ndarray
    u: np.ndarray
    m: np.ndarray
    coupling: np.ndarray
    scale: str = "physical"
    converged: bool = True
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    theta_history: list = field(default_factory=list)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def n_steps(self) -> int:
        return self.times.size - 1


def time_grid(T: float, dt: float) -> np.ndarray:
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    return np.linspace(0.0, T, n + 1)


def coupling_series(grid: Grid1D, m_traj: np.ndarray, kappa: float) -> np.ndarray:
    return kappa * (1.0 - integrate_rows(grid, eval_potential(grid) * m_traj))


def solve_hjb_backward(grid: Grid1D, m_traj: np.ndarray, terminal_u: np.ndarray,
                       kappa: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Backward implicit Cole-Hopf sweep; returns ``(u, b)`` on every time level.

    Each step solves ``(I + dt (-Lap + b V / 2)) phi^n = phi^{n+1}``. ``phi``
    is rescaled to unit maximum after every step and the scale is carried as
    an additive offset of ``u``, so nothing underflows.
    """
    m_traj = np.asarray(m_traj, dtype=float)
    n_t, n = m_traj.shape
    uT = np.asarray(terminal_u, dtype=float)
    if uT.shape != (n,):
        raise ValueError("terminal_u does not match the grid")
    b = coupling_series(grid, m_traj, kappa)
    V = eval_potential(grid)
    lap_d, lap_o = laplacian_bands(grid)
    ab = np.zeros((3, n))
    ab[0, 1:] = -dt * lap_o
    ab[2, :-1] = -dt * lap_o
    base_diag = 1.0 - dt * lap_d

    u = np.empty((n_t, n))
    u[-1] = uT
    shift = -0.5 * float(np.min(uT))
    phi = np.exp(-0.5 * uT - shift)
    for k in range(n_t - 2, -1, -1):
        ab[1] = base_diag + 0.5 * dt * b[k] * V
        phi = solve_banded((1, 1), ab, phi, check_finite=False)
        top = float(np.max(phi))
        if not np.all(phi > 0):
            raise PositivityError(f"Cole-Hopf factor lost positivity at step {k}")
        phi /= top
        shift += math.log(top)
        u[k] = -2.0 * (np.log(phi) + shift)
    return u, b


def bernoulli(z: np.ndarray) -> np.ndarray:
    """``z / (exp(z) - 1)`` with the removable singularity filled in."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 - 0.5 * z, safe / np.expm1(safe))


def fp_operator_bands(grid: Grid1D, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bands (upper, diag, lower) of ``m -> (m_x + m u_x)_x`` in flux form.

    Face flux ``J = (B(-du) m_{i+1} - B(du) m_i) / h`` with ``du = u_{i+1} - u_i``;
    columns sum to zero, so mass is conserved exactly.
    """
    h2 = grid.h**2
    du = np.diff(u)
    bp, bm = bernoulli(du), bernoulli(-du)
    upper = bm / h2
    lower = bp / h2
    diag = np.zeros(u.size)
    diag[:-1] -= bp / h2
    diag[1:] -= bm / h2
    return upper, diag, lower


def solve_fp_forward(grid: Grid1D, u_traj: np.ndarray, initial_m: np.ndarray,
                     dt: float) -> np.ndarray:
    """Implicit Scharfetter-Gummel steps; the drift of step ``n -> n+1`` uses ``u^{n+1}``."""
    u_traj = np.asarray(u_traj, dtype=float)
    n_t, n = u_traj.shape
    m = np.empty((n_t, n))
    m[0] = initial_m
    ab = np.zeros((3, n))
    for k in range(n_t - 1):
        up, di, lo = fp_operator_bands(grid, u_traj[k + 1])
        ab[0, 1:] = -dt * up
        ab[1] = 1.0 - dt * di
        ab[2, :-1] = -dt * lo
        m[k + 1] = solve_banded((1, 1), ab, m[k], check_finite=False)
        if not np.all(m[k + 1] > 0):
            raise PositivityError(f"density lost positivity at step {k + 1}")
    return m


def solve_mfg(
    grid: Grid1D,
    initial_m: np.ndarray,
    terminal_u: np.ndarray,
    kappa: float,
    T: float,
    dt: float | None = None,
    *,
    theta: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 200,
    guess: np.ndarray | None = None,
    min_theta: float = 1.0 / 64.0,
) -> DynamicTrajectory:
    """Damped Picard iteration ``m <- (1 - theta) m + theta FP(HJB(m))``.

    Stops when ``max_t |m^{k+1} - m^k|_{L^1} <= tol``. ``theta`` is halved
    whenever the residual grows. Without convergence the best iterate is
    returned with ``converged = False``. ``guess`` is the starting density,
    either one profile for all times or a full array; it defaults to
    ``initial_m`` at every time.
    """
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    if not tol > 0:
        raise ValueError("tol must be positive")
    m0 = np.asarray(initial_m, dtype=float)
    uT = np.asarray(terminal_u, dtype=float)
    if not (has_parity(m0, "even", 1e-10) and has_parity(uT, "even", 1e-10)):
        raise ValueError("boundary data must be even")
    if np.any(m0 <= 0) or abs(grid.h * m0.sum() - 1.0) > 1e-10:
        raise ValueError("initial_m must be positive with unit mass")
    dt = grid.h**2 / 2.0 if dt is None else float(dt)
    times = time_grid(T, dt)
    step = float(times[1] - times[0])

    if guess is None:
        guess = m0
    m = np.array(guess, dtype=float)
    if m.ndim == 1:
        m = np.tile(m, (times.size, 1))
    if m.shape != (times.size, grid.n_cells):
        raise ValueError("guess must be a profile or a full time-by-space array")
    m[0] = m0
    history, thetas = [], []
    best = None
    prev = math.inf
    for it in range(1, max_iter + 1):
        u, b = solve_hjb_backward(grid, m, uT, kappa, step)
        m_new = solve_fp_forward(grid, u, m0, step)
        diff = float(np.max(grid.h * np.sum(np.abs(m_new - m), axis=1)))
        res = theta * diff
        history.append(res)
        thetas.append(theta)
        if best is None or res < best[0]:
            best = (res, u, m_new, b, it)
        if res <= tol:
            return DynamicTrajectory(grid, float(kappa), times, u, m_new, b, "physical",
                                     True, it, history, thetas)
        if diff > prev and theta > min_theta:
            theta = max(theta / 2.0, min_theta)
        prev = diff
        m = (1.0 - theta) * m + theta * m_new
    res, u, m_new, b, it = best
    return DynamicTrajectory(grid, float(kappa), times, u, m_new, b, "physical",
                             False, max_iter, history, thetas)


def trajectory_residuals(traj: DynamicTrajectory) -> dict:
    """Sup-norm residuals of both equations with centered differences.

    These are truncation errors of the scheme, ``O(dt + h^2)`` times the
    solution scale, not solver tolerances.
    """
    g, dt = traj.grid, traj.dt
    V = eval_potential(g)
    u, m = traj.u, traj.m
    ux = diff_neumann(g, u)
    hjb = -(u[1:] - u[:-1]) / dt - laplacian_neumann(g, u[:-1]) + 0.5 * ux[:-1] ** 2
    hjb -= traj.coupling[:-1, None] * V
    flux_div = laplacian_neumann(g, m[1:]) + diff_neumann(g, m[1:] * ux[1:])
    fp = (m[1:] - m[:-1]) / dt - flux_div
    return {
        "hjb": float(np.max(np.abs(hjb[:, 1:-1]))),
        "fp": float(np.max(np.abs(fp[:, 1:-1]))),
        "mass": float(np.max(np.abs(g.h * m.sum(axis=1) - 1.0))),
        "mass_step": float(np.max(np.abs(np.diff(g.h * m.sum(axis=1))))),
        "min_m": float(np.min(m)),
        "even": float(max(np.max(np.abs(u - u[:, ::-1])), np.max(np.abs(m - m[:, ::-1])))),
    }


# ----------------------------------------------------------------- deviations


@dataclass
class DeviationFields:
    """Deviation from the stationary state in rescaled units.

    Time ``t_r = kappa^{1/2} t`` and space ``x_r = kappa^{1/4} x``. ``v`` and
    ``zeta`` are node values on the rescaled grid; the per-step integrals are
    stored so that checks do not recompute them.
    """

    kappa: float
    times: np.ndarray          # rescaled
    v: np.ndarray
    zeta: np.ndarray
    phi: np.ndarray
    phi_physical: np.ndarray
    grad_energy: np.ndarray    # int mu_bar v_x^2
    weighted_l2: np.ndarray    # int zeta^2 / mu_bar
    moment: np.ndarray         # int V_kappa zeta
    mixed_energy: np.ndarray   # int (mu + mu_bar)/2 v_x^2
    pairing: np.ndarray        # int v zeta
    density_ratio: np.ndarray  # max_x m / m_bar per step
    constants: StabilityConstants
    h_r: float

    @property
    def dt_r(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def hypothesis_bound(self) -> float:
        return self.constants.c_dom * self.kappa**0.25

    @property
    def hypothesis_ok(self) -> np.ndarray:
        return self.density_ratio <= self.hypothesis_bound


def compute_phi(traj: DynamicTrajectory, stationary: ErgodicSolution,
                constants: StabilityConstants | None = None) -> DeviationFields:
    if traj.scale != "physical":
        raise ValueError("compute_phi expects a physical-scale trajectory")
    if not traj.grid.same_as(stationary.grid) or not math.isclose(traj.kappa, stationary.kappa):
        raise ValueError("trajectory and stationary state live on different scales")
    if constants is None:
        constants = stability_constants(stationary)
    k = traj.kappa
    g = traj.grid
    h = g.h
    q4 = k**0.25
    V = eval_potential(g)
    mb, ub = stationary.m, stationary.u
    dm = traj.m - mb
    du = traj.u - ub
    dux = diff_neumann(g, traj.u) - diff_neumann(g, ub)
    Q = constants.Q

    grad = h * np.sum(mb * dux**2, axis=1) / math.sqrt(k)
    wl2 = h * np.sum(dm**2 / mb, axis=1)
    phi = grad + Q / math.sqrt(k) * wl2
    moment = math.sqrt(k) * h * np.sum(V * dm, axis=1)
    mixed = h * np.sum(0.5 * (traj.m + mb) * dux**2, axis=1) / math.sqrt(k)
    pairing = h * np.sum(du * dm, axis=1)
    remaining = traj.T - traj.times
    v = du - stationary.lam * remaining[:, None]
    return DeviationFields(
        kappa=k,
        times=math.sqrt(k) * traj.times,
        v=v,
        zeta=dm / q4,
        phi=phi,
        phi_physical=math.sqrt(k) * phi,
        grad_energy=grad,
        weighted_l2=wl2,
        moment=moment,
        mixed_energy=mixed,
        pairing=pairing,
        density_ratio=np.max(traj.m / mb, axis=1),
        constants=constants,
        h_r=q4 * h,
    )


def duality_residual(dev: DeviationFields) -> tuple[np.ndarray, float]:
    """Residual of ``d/dt int v zeta = -int (mu + mu_bar)/2 v_x^2 + kappa^{-1/2} (int V_k zeta)^2``.

    Central differences in rescaled time at interior steps. Returns the
    residual series and the tolerance ``10 (dt_r + h_r^2) max|rhs|``.
    """
    dt = dev.dt_r
    lhs = (dev.pairing[2:] - dev.pairing[:-2]) / (2.0 * dt)
    rhs = -dev.mixed_energy + dev.moment**2 / math.sqrt(dev.kappa)
    res = lhs - rhs[1:-1]
    scale = float(np.max(np.abs(rhs)))
    return res, 10.0 * (dt + dev.h_r**2) * scale


def moment_bound_check(dev: DeviationFields) -> np.ndarray:
    """Per-step ``(int V_k zeta)^2 <= (Q/4) int zeta^2/mu_bar``; returns the slack."""
    return dev.constants.Q / 4.0 * dev.weighted_l2 - dev.moment**2


def energy_inequality_check(dev: DeviationFields, pairs, literal: bool = False) -> np.ndarray:
    """Weighted-L2 energy inequality on index pairs; returns the slack per pair.

    The derived form is ``C_P (E2 - E1) + int E <= kappa^{1/2} C_P^2 / Q int int mu_bar v_x^2``
    with ``E = int zeta^2/mu_bar``; ``literal=True`` checks
    ``(E2 - E1)/C_P + int E <= kappa^{1/2}/Q int int mu_bar v_x^2`` instead.
    """
    cp, Q = dev.constants.C_P, dev.constants.Q
    E, A, t = dev.weighted_l2, dev.grad_energy, dev.times
    cE = cumulative_trapezoid(E, t, initial=0.0)
    cA = cumulative_trapezoid(A, t, initial=0.0)
    i, j = (np.asarray(p) for p in zip(*pairs))
    if literal:
        lhs = (E[j] - E[i]) / cp + (cE[j] - cE[i])
        rhs = math.sqrt(dev.kappa) / Q * (cA[j] - cA[i])
    else:
        lhs = cp * (E[j] - E[i]) + (cE[j] - cE[i])
        rhs = math.sqrt(dev.kappa) * cp**2 / Q * (cA[j] - cA[i])
    return rhs - lhs


def gauge_transform(grid: Grid1D, times: np.ndarray, u_tilde: np.ndarray,
                    m_traj: np.ndarray, kappa: float, inverse: bool = False) -> np.ndarray:
    """Subtract (or add back) ``kappa int_0^t int cos(y) m(s, y) dy ds``."""
    times = np.asarray(times, dtype=float)
    m_traj = np.asarray(m_traj, dtype=float)
    if m_traj.shape[0] != times.size or np.shape(u_tilde)[0] != times.size:
        raise ValueError("time grids are not aligned")
    moment = integrate_rows(grid, np.cos(grid.x) * m_traj)
    shift = kappa * cumulative_trapezoid(moment, times, initial=0.0)
    sign = 1.0 if inverse else -1.0
    return np.asarray(u_tilde, dtype=float) + sign * shift[:, None]


def perturbed_density(stationary: ErgodicSolution, amplitude: float) -> np.ndarray:
    """``m_bar (1 + amplitude cos x)`` renormalized to unit mass."""
    g = stationary.grid
    m = stationary.m * (1.0 + amplitude * np.cos(g.x))
    return m / (g.h * m.sum())


__all__ = [
    "DynamicTrajectory",
    "DeviationFields",
    "PositivityError",
    "solve_hjb_backward",
    "solve_fp_forward",
    "solve_mfg",
    "trajectory_residuals",
    "compute_phi",
    "duality_residual",
    "moment_bound_check",
    "energy_inequality_check",
    "gauge_transform",
    "perturbed_density",
    "bernoulli",
    "fp_operator_bands",
    "time_grid",
    "coupling_series",
]
