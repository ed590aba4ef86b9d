"""Stationary and dynamic equilibria of the Kuramoto mean field game on a periodic cell."""

__version__ = "0.1.0"

from .grid import Grid1D, make_grid, integrate, eval_potential
from .ergodic import (
    EigenSolverError,
    ErgodicSolution,
    solve_ergodic,
    eval_F,
    reflect,
    rescale,
)
from .linearized import LinearizedSolution, solve_linearized, solve_corrector, fprime, fd_fprime
from .equilibria import (
    FMapTable,
    FixedPointReport,
    sweep_fmap,
    find_fixed_points,
    estimate_threshold,
    asymptotic_fixed_point,
    self_organizing_solution,
)
from .dynamic import DynamicTrajectory, PositivityError, solve_mfg, compute_phi
from .analysis import (
    StabilityConstants,
    stability_constants,
    poincare_constant,
    compute_Q,
    decay_from_integral_inequality,
    pointwise_from_average,
    fit_envelopes,
    verify_lyapunov,
)
from .turnpike import TurnpikeReport, run_turnpike

__all__ = [
    "__version__",
    "Grid1D", "make_grid", "integrate", "eval_potential",
    "EigenSolverError", "ErgodicSolution", "solve_ergodic", "eval_F", "reflect", "rescale",
    "LinearizedSolution", "solve_linearized", "solve_corrector", "fprime", "fd_fprime",
    "FMapTable", "FixedPointReport", "sweep_fmap", "find_fixed_points", "estimate_threshold",
    "asymptotic_fixed_point", "self_organizing_solution",
    "DynamicTrajectory", "PositivityError", "solve_mfg", "compute_phi",
    "StabilityConstants", "stability_constants", "poincare_constant", "compute_Q",
    "decay_from_integral_inequality", "pointwise_from_average", "fit_envelopes", "verify_lyapunov",
    "TurnpikeReport", "run_turnpike",
]
