"""Derivative of the ergodic problem with respect to the coupling level ``a``.

Differentiating the stationary system in ``a`` gives

    -v'' + v' u' + lam' = -kappa V,     v'(+-pi) = 0,   v(0) = 0,

with ``lam' = -kappa F(a)``. In conservative form ``(m v')' = (lam' + kappa V) m``,
so ``m v'`` is a running integral. The discrete version below uses the face
weight ``phi_i phi_{i+1}`` of the ground state, which makes ``v`` the exact
``a``-derivative of the discrete ``u`` and both slope formulas the exact
derivative of the discrete ``F``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ergodic import ErgodicSolution, eval_F, solve_ergodic
from .grid import Grid1D, diff_neumann, eval_potential, integrate, laplacian_neumann


@dataclass(frozen=True)
class LinearizedSolution:
    base: ErgodicSolution
    v: np.ndarray
    lam_prime: float
    fprime_quadratic: float
    fprime_bilinear: float
    residual: float
    z: np.ndarray | None = None

    @property
    def grid(self) -> Grid1D:
        return self.base.grid


def _running_flux(grid: Grid1D, q: np.ndarray) -> np.ndarray:
    """Face values of ``int_{-L}^{x_f} q``, summed from the nearer boundary.

    The total integral of ``q`` vanishes in exact arithmetic, so summing from
    the right and negating is equivalent; doing so on the right half keeps the
    small tail values free of cancellation.
    """
    h = grid.h
    left = h * np.cumsum(q)[:-1]
    right = -h * np.cumsum(q[::-1])[::-1][1:]
    half = grid.n_cells // 2
    flux = np.empty(grid.n_cells - 1)
    flux[: half - 1] = left[: half - 1]
    flux[half - 1 :] = right[half - 1 :]
    # the middle face sits at x = 0; average the two evaluations there
    flux[half - 1] = 0.5 * (left[half - 1] + right[half - 1])
    return flux


def _integrate_faces(grid: Grid1D, slope: np.ndarray) -> np.ndarray:
    """Node values from face slopes, pinned to zero at the center node."""
    vals = np.concatenate([[0.0], np.cumsum(grid.h * slope)])
    return vals - vals[grid.center_index]


def _face_weight(sol: ErgodicSolution) -> np.ndarray:
    log_phi = np.log(sol.phi)
    return np.exp(log_phi[:-1] + log_phi[1:])


def solve_linearized(base: ErgodicSolution) -> LinearizedSolution:
    grid, kappa = base.grid, base.kappa
    pot = eval_potential(grid)
    F = eval_F(base)
    lam_prime = -kappa * F
    flux = _running_flux(grid, (lam_prime + kappa * pot) * base.m)
    w = _face_weight(base)
    dv = flux / w
    v = _integrate_faces(grid, dv)

    quad = float(grid.h * np.sum(w * dv**2) / kappa)
    bil = -integrate(grid, (lam_prime / kappa + pot) * v * base.m)
    res = -laplacian_neumann(grid, v) + diff_neumann(grid, v) * diff_neumann(grid, base.u)
    res += lam_prime + kappa * pot
    v.setflags(write=False)
    return LinearizedSolution(
        base=base,
        v=v,
        lam_prime=lam_prime,
        fprime_quadratic=quad,
        fprime_bilinear=bil,
        residual=float(np.max(np.abs(res[1:-1]))),
    )


def fprime_pair(lin: LinearizedSolution) -> tuple[float, float]:
    """``(1/kappa) int |v'|^2 m`` and ``-int (lam'/kappa + V) v m``."""
    return lin.fprime_quadratic, lin.fprime_bilinear


def fd_fprime(a: float, kappa: float, grid: Grid1D, step: float = 1e-4) -> float:
    """Central difference of ``F`` in ``a``; one-sided inside ``[0, 2]`` at the ends."""
    lo, hi = max(a - step, 0.0), min(a + step, 2.0)
    f_hi = eval_F(solve_ergodic(hi, kappa, grid))
    f_lo = eval_F(solve_ergodic(lo, kappa, grid))
    return (f_hi - f_lo) / (hi - lo)


def solve_corrector(
    base: ErgodicSolution, tau_max: float = 1.0, lin: LinearizedSolution | None = None
) -> LinearizedSolution:
    """Near-incoherent corrector ``z`` with ``v = kappa (cos x - 1 + z)``.

    Solves ``-z'' + z' u' = sin(x) u' - (kappa + lam')/kappa`` in the same
    conservative form as :func:`solve_linearized`. Only meaningful when
    ``|1 - a| <= tau_max / kappa``.
    """
    kappa = base.kappa
    if not 0 < tau_max <= 1:
        raise ValueError("tau_max must lie in (0, 1]")
    if abs(1.0 - base.a) > tau_max / kappa * (1 + 1e-12):
        raise ValueError(
            f"corrector needs |1 - a| <= {tau_max}/kappa, got a = {base.a}, kappa = {kappa}"
        )
    if lin is None:
        lin = solve_linearized(base)
    grid = base.grid
    du = diff_neumann(grid, base.u)
    rhs = np.sin(grid.x) * du - (kappa + lin.lam_prime) / kappa
    flux = -_running_flux(grid, rhs * base.m)
    z = _integrate_faces(grid, flux / _face_weight(base))
    z.setflags(write=False)
    return LinearizedSolution(
        base=lin.base,
        v=lin.v,
        lam_prime=lin.lam_prime,
        fprime_quadratic=lin.fprime_quadratic,
        fprime_bilinear=lin.fprime_bilinear,
        residual=lin.residual,
        z=z,
    )


def corrector_reconstruction(lin: LinearizedSolution) -> np.ndarray:
    """``kappa (cos x - 1 + z)``, to be compared with ``lin.v``."""
    if lin.z is None:
        raise ValueError("no corrector attached; call solve_corrector first")
    x = lin.grid.x
    return lin.base.kappa * (np.cos(x) - 1.0 + lin.z)


def corrector_bounds(lin: LinearizedSolution) -> tuple[float, float]:
    """``sup |z|`` and ``sup |z'|``."""
    if lin.z is None:
        raise ValueError("no corrector attached")
    return float(np.max(np.abs(lin.z))), float(np.max(np.abs(diff_neumann(lin.grid, lin.z))))


def fprime(a: float, kappa: float, grid: Grid1D) -> float:
    return solve_linearized(solve_ergodic(a, kappa, grid)).fprime_quadratic


__all__ = [
    "LinearizedSolution",
    "solve_linearized",
    "fprime_pair",
    "fd_fprime",
    "solve_corrector",
    "corrector_reconstruction",
    "corrector_bounds",
    "fprime",
]
