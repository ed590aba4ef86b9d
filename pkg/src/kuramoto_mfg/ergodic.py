"""Ergodic Hamilton-Jacobi problem and the map ``a -> F_kappa(a)``.

For a fixed coupling level ``a`` the stationary equation

    -u'' + |u'|^2 / 2 + lam = kappa V(x) (1 - a),   u'(+-pi) = 0,  u(0) = 0

is linearised by ``phi = exp(-u/2)`` into the Neumann ground-state problem

    -phi'' + kappa V (1 - a) / 2 phi = E phi,       lam = 2 E.

The discrete problem is the symmetric tridiagonal Neumann Laplacian plus a
diagonal potential; ``u`` and ``m`` are read off the ground state so that
``m = exp(-u) / int exp(-u)`` holds exactly on the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal, solve_banded

from .grid import (
    Grid1D,
    diff_neumann,
    eval_potential,
    integrate,
    laplacian_bands,
    laplacian_neumann,
    make_grid,
)


class EigenSolverError(RuntimeError):
    """Ground-state iteration failed to converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class ErgodicSolution:
    a: float
    kappa: float
    grid: Grid1D
    u: np.ndarray
    lam: float
    m: np.ndarray
    # ground eigenvalue of -d^2 + kappa V (1-a)/2; equals lam / 2
    eigenvalue: float
    phi: np.ndarray
    eig_residual: float
    hjb_residual: float
    iterations: int

    @property
    def log_m(self) -> np.ndarray:
        return 2.0 * np.log(self.phi)


@dataclass(frozen=True)
class GroundState:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int


def ground_state(
    diag: np.ndarray,
    off: np.ndarray,
    *,
    tol: float = 1e-12,
    max_iter: int = 50,
    start: np.ndarray | None = None,
) -> GroundState:
    """Lowest eigenpair of a symmetric tridiagonal matrix with off-diagonal ``off``.

    Shifted inverse iteration; the shift sits just below the lowest eigenvalue
    (located by bisection) so the shifted matrix stays positive definite and
    its inverse keeps the positive vector positive. The eigenvalue is the
    Rayleigh quotient of the converged vector. ``tol`` bounds the residual
    ``|H phi - E phi|_inf`` relative to ``|H|_inf |phi|_inf``.
    """
    n = diag.size
    e0, e1 = eigvalsh_tridiagonal(diag, off, select="i", select_range=(0, 1))
    norm_h = float(np.max(np.abs(diag)) + 2.0 * np.max(np.abs(off)))
    eps = np.finfo(float).eps
    margin = max(1e-4 * (e1 - e0), 1e4 * eps * norm_h)
    shift = e0 - margin

    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1, :] = diag - shift
    ab[2, :-1] = off

    vec = np.ones(n) if start is None else np.array(start, dtype=float)

    def apply(v):
        out = diag * v
        out[:-1] += off * v[1:]
        out[1:] += off * v[:-1]
        return out

    residual = math.inf
    value = e0
    for it in range(1, max_iter + 1):
        vec = solve_banded((1, 1), ab, vec)
        vec /= np.max(np.abs(vec))
        hv = apply(vec)
        value = float(vec @ hv / (vec @ vec))
        residual = float(np.max(np.abs(hv - value * vec)) / norm_h)
        if residual <= tol:
            break
    else:
        raise EigenSolverError("ground-state iteration did not converge", residual)
    if vec.sum() < 0:
        vec = -vec
    return GroundState(value, vec, residual, it)


def _potential(grid: Grid1D, a: float, kappa: float) -> np.ndarray:
    return 0.5 * kappa * (1.0 - a) * eval_potential(grid)


def hjb_residual(grid: Grid1D, u: np.ndarray, lam: float, rhs: np.ndarray) -> float:
    """Sup over interior nodes of ``|-u'' + |u'|^2/2 + lam - rhs|``."""
    res = -laplacian_neumann(grid, u) + 0.5 * diff_neumann(grid, u) ** 2 + lam - rhs
    return float(np.max(np.abs(res[1:-1])))


def solve_ergodic(
    a: float,
    kappa: float,
    grid: Grid1D,
    *,
    tol: float = 1e-12,
    max_iter: int = 50,
    direct: bool = False,
) -> ErgodicSolution:
    """Solve the ergodic problem for coupling level ``a`` in ``[0, 2]``.

    For ``a > 1`` the solution is obtained from ``2 - a`` through the
    half-period shift symmetry unless ``direct`` is set.
    """
    if not 0.0 <= a <= 2.0:
        raise ValueError(f"a must lie in [0, 2], got {a}")
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    if a > 1.0 and not direct:
        return reflect(solve_ergodic(2.0 - a, kappa, grid, tol=tol, max_iter=max_iter))

    pot = _potential(grid, a, kappa)
    lap_d, lap_o = laplacian_bands(grid)
    gs = ground_state(-lap_d + pot, -lap_o, tol=tol, max_iter=max_iter)
    phi = 0.5 * (gs.vector + gs.vector[::-1])
    if np.any(phi <= 0):
        raise RuntimeError("ground state is not positive; eigensolver picked a wrong mode")
    log_phi = np.log(phi / phi.max())
    if a <= 1.0:
        log_phi = _repair_tails(grid, pot, gs.value, log_phi)
    log_phi -= 0.5 * math.log(integrate(grid, np.exp(2.0 * log_phi)))
    return _assemble(a, kappa, grid, log_phi, gs.value, gs.residual, gs.iterations)


def _repair_tails(grid, pot, eig, log_phi, cutoff=1e-2):
    """Rebuild the small tail of an even ground state from the three-term recurrence.

    Inverse iteration only resolves ``phi`` to an absolute accuracy, which
    destroys ``log phi`` where the state is exponentially small. Marching
    the ratio ``phi_{i+1}/phi_i`` inward from the reflecting boundary follows
    the growing solution and is stable there.
    """
    n = grid.n_cells
    half = log_phi[: n // 2]
    small = np.nonzero(half < math.log(cutoff))[0]
    if small.size == 0:
        return log_phi
    j = int(small[-1]) + 1
    d = 2.0 + grid.h**2 * (pot[:j] - eig)
    ratios = np.empty(j)
    r = 1.0
    for i in range(j):
        r = d[i] - 1.0 / r
        if r <= 0:
            return log_phi
        ratios[i] = r
    out = np.array(log_phi)
    # log phi_i = log phi_j - sum_{k=i}^{j-1} log r_k
    tail = np.cumsum(np.log(ratios)[::-1])[::-1]
    out[:j] = log_phi[j] - tail
    out[n - j :] = out[:j][::-1]
    return out


def _assemble(a, kappa, grid, log_phi, eig, eig_res, iterations) -> ErgodicSolution:
    phi = np.exp(log_phi)
    u = -2.0 * (log_phi - log_phi[grid.center_index])
    m = phi**2
    lam = 2.0 * eig
    rhs = kappa * (1.0 - a) * eval_potential(grid)
    res = hjb_residual(grid, u, lam, rhs)
    for arr in (u, m, phi):
        arr.setflags(write=False)
    return ErgodicSolution(
        a=float(a),
        kappa=float(kappa),
        grid=grid,
        u=u,
        lam=lam,
        m=m,
        eigenvalue=eig,
        phi=phi,
        eig_residual=eig_res,
        hjb_residual=res,
        iterations=iterations,
    )


def half_period_shift(grid: Grid1D, values: np.ndarray) -> np.ndarray:
    """Values of ``f(x + pi)`` for a 2pi-periodic ``f`` sampled on ``[-pi, pi]``."""
    if not np.isclose(grid.half_width, math.pi, rtol=1e-14, atol=0):
        raise ValueError("half-period shift needs the physical grid [-pi, pi]")
    return np.roll(values, -grid.n_cells // 2, axis=-1)


def reflect(sol: ErgodicSolution) -> ErgodicSolution:
    """Map the solution at ``a`` to the one at ``2 - a``.

    ``u_{2-a}(x) = u_a(x + pi) - u_a(pi)`` and ``lam_{2-a} = lam_a - 2 kappa (1 - a)``.
    """
    grid = sol.grid
    log_phi = half_period_shift(grid, np.log(sol.phi))
    eig = sol.eigenvalue - sol.kappa * (1.0 - sol.a)
    return _assemble(2.0 - sol.a, sol.kappa, grid, log_phi, eig, sol.eig_residual, sol.iterations)


def eval_F(sol: ErgodicSolution) -> float:
    """``F_kappa(a) = int V m_a``."""
    return integrate(sol.grid, eval_potential(sol.grid) * sol.m)


def eval_F_cosine(sol: ErgodicSolution) -> float:
    """Same quantity through ``1 - int m_a cos``."""
    return 1.0 - integrate(sol.grid, np.cos(sol.grid.x) * sol.m)


def F_value(a: float, kappa: float, grid: Grid1D) -> float:
    return eval_F(solve_ergodic(a, kappa, grid))


class Rescaled(NamedTuple):
    grid: Grid1D
    w: np.ndarray
    mu: np.ndarray
    lam: float


def rescale(sol: ErgodicSolution) -> Rescaled:
    """Blow-up ``w(x) = u(x k^-1/4)``, ``mu(x) = k^-1/4 m(x k^-1/4)``, ``lam k^-1/2``.

    The rescaled grid has the same number of cells, so nodes map one-to-one.
    """
    k = sol.kappa
    grid = make_grid(math.pi * k**0.25, sol.grid.n_cells)
    return Rescaled(grid, np.array(sol.u), k**-0.25 * sol.m, sol.lam / math.sqrt(k))


def rescaled_residual(sol: ErgodicSolution) -> float:
    """Residual of the blown-up equation at coupling level ``a``."""
    r = rescale(sol)
    rhs = (1.0 - sol.a) * eval_potential(r.grid, rescaled=True, kappa=sol.kappa)
    return hjb_residual(r.grid, r.w, r.lam, rhs)
