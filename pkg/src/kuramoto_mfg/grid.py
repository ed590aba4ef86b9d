"""Cell-centered grids, midpoint quadrature and Neumann finite differences.

All fields in the package live on a uniform cell-centered mesh of ``[-L, L]``.
Neumann conditions are imposed with ghost cells that mirror the adjacent
interior value, so even functions behave exactly like their periodic
extension.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

Parity = Literal["even", "odd", "none"]


@dataclass(frozen=True)
class Grid1D:
    half_width: float
    n_cells: int
    x: np.ndarray = field(repr=False, compare=False)

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.n_cells

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n_cells, self.h)

    @property
    def center_index(self) -> int:
        """Index of the node at ``+h/2`` (one of the two nodes nearest 0)."""
        return self.n_cells // 2

    @property
    def faces(self) -> np.ndarray:
        """Interior face coordinates, ``n_cells - 1`` of them."""
        return self.x[:-1] + 0.5 * self.h

    def same_as(self, other: "Grid1D") -> bool:
        return self.n_cells == other.n_cells and np.isclose(
            self.half_width, other.half_width, rtol=1e-14, atol=0.0
        )


def make_grid(half_width: float, n_cells: int) -> Grid1D:
    if not half_width > 0:
        raise ValueError(f"half_width must be positive, got {half_width}")
    if int(n_cells) != n_cells or n_cells < 8 or n_cells % 2:
        raise ValueError(f"n_cells must be an even integer >= 8, got {n_cells}")
    n_cells = int(n_cells)
    h = 2.0 * half_width / n_cells
    i = np.arange(n_cells)
    # build from both ends so that x[i] == -x[n-1-i] holds bitwise
    left = -half_width + (i[: n_cells // 2] + 0.5) * h
    x = np.concatenate([left, -left[::-1]])
    x.setflags(write=False)
    return Grid1D(float(half_width), n_cells, x)


@dataclass(frozen=True)
class ScalarField:
    """Grid function with an optional parity tag."""

    grid: Grid1D
    values: np.ndarray
    parity: Parity = "none"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_cells,):
            raise ValueError(
                f"expected {self.grid.n_cells} values, got shape {vals.shape}"
            )
        object.__setattr__(self, "values", vals)
        if self.parity != "none" and not has_parity(vals, self.parity):
            raise ValueError(f"values are not {self.parity}")

    def integrate(self) -> float:
        return integrate(self.grid, self.values)

    def derivative(self) -> "ScalarField":
        flipped = {"even": "odd", "odd": "even", "none": "none"}[self.parity]
        return ScalarField(self.grid, diff_neumann(self.grid, self.values), flipped)


def has_parity(values: np.ndarray, parity: Parity, rtol: float = 1e-12) -> bool:
    values = np.asarray(values)
    scale = max(float(np.max(np.abs(values))), np.finfo(float).tiny)
    if parity == "even":
        err = np.max(np.abs(values - values[::-1]))
    elif parity == "odd":
        err = np.max(np.abs(values + values[::-1]))
    else:
        return True
    return bool(err <= rtol * scale)


def integrate(grid: Grid1D, values) -> float:
    """Midpoint rule; ``values`` may also be a :class:`ScalarField`."""
    if isinstance(values, ScalarField):
        values = values.values
    return float(grid.h * np.sum(values))


def integrate_rows(grid: Grid1D, values: np.ndarray) -> np.ndarray:
    """Midpoint rule applied along the last axis of a 2D array."""
    return grid.h * np.sum(values, axis=-1)


def diff_neumann(grid: Grid1D, values) -> np.ndarray:
    """Centered first derivative with mirrored ghost cells.

    Works along the last axis, so time-indexed arrays are differentiated
    row by row.
    """
    if isinstance(values, ScalarField):
        values = values.values
    f = np.asarray(values, dtype=float)
    padded = np.concatenate([f[..., :1], f, f[..., -1:]], axis=-1)
    return (padded[..., 2:] - padded[..., :-2]) / (2.0 * grid.h)


def face_diff(grid: Grid1D, values: np.ndarray) -> np.ndarray:
    """Differences across the ``n_cells - 1`` interior faces."""
    f = np.asarray(values, dtype=float)
    return (f[..., 1:] - f[..., :-1]) / grid.h


def laplacian_neumann(grid: Grid1D, values: np.ndarray) -> np.ndarray:
    f = np.asarray(values, dtype=float)
    padded = np.concatenate([f[..., :1], f, f[..., -1:]], axis=-1)
    return (padded[..., 2:] - 2.0 * f + padded[..., :-2]) / grid.h**2


def laplacian_bands(grid: Grid1D) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of the (negative semidefinite) Neumann Laplacian."""
    n, h2 = grid.n_cells, grid.h**2
    diag = np.full(n, -2.0 / h2)
    diag[0] = diag[-1] = -1.0 / h2
    off = np.full(n - 1, 1.0 / h2)
    return diag, off


def one_minus_cos(x: np.ndarray) -> np.ndarray:
    # 2 sin^2(x/2) keeps full relative accuracy near 0
    return 2.0 * np.sin(0.5 * np.asarray(x)) ** 2


def eval_potential(grid: Grid1D, rescaled: bool = False, kappa: float = 1.0) -> np.ndarray:
    """``V(x) = 1 - cos x`` or its blow-up ``sqrt(kappa) V(x kappa^{-1/4})``."""
    if not rescaled:
        return one_minus_cos(grid.x)
    if kappa < 1:
        raise ValueError("rescaled potential requires kappa >= 1")
    return np.sqrt(kappa) * one_minus_cos(grid.x * kappa**-0.25)
