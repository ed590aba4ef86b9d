"""Sweeps of ``a -> F_kappa(a)``, fixed points and the empirical threshold."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .ergodic import eval_F, solve_ergodic
from .grid import Grid1D
from .linearized import solve_linearized

DELTA = 0.05
TAU0 = 0.5
PROBE_TAUS = (0.1, 0.5, 1.0)
FIXED_POINT_TOL = 1e-10


@dataclass(frozen=True)
class FMapTable:
    kappa: float
    a_samples: np.ndarray
    F_values: np.ndarray
    Fprime_values: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a_samples, dtype=float)
        if a.ndim != 1 or not (a.shape == np.shape(self.F_values) == np.shape(self.Fprime_values)):
            raise ValueError("a_samples, F_values and Fprime_values must be 1D of equal length")
        if np.any(np.diff(a) <= 0) or a[0] < 0 or a[-1] > 2:
            raise ValueError("a_samples must be strictly increasing inside [0, 2]")

    def monotone(self, tol: float = 1e-8) -> bool:
        return bool(np.all(np.diff(self.F_values) >= -tol))

    def symmetry_error(self) -> float:
        """Largest ``|F(2-a) - (2 - F(a))|`` over mirrored sample pairs."""
        a = np.round(self.a_samples, 12)
        lookup = dict(zip(a, self.F_values))
        errs = [abs(lookup[round(2.0 - ai, 12)] - (2.0 - fi))
                for ai, fi in zip(a, self.F_values) if round(2.0 - ai, 12) in lookup]
        return max(errs, default=0.0)


def _point(args):
    a, kappa, grid = args
    try:
        sol = solve_ergodic(a, kappa, grid)
    except Exception as exc:
        raise RuntimeError(f"F evaluation failed at a = {a}: {exc}") from exc
    return eval_F(sol), solve_linearized(sol).fprime_quadratic


def _evaluate(a_values, kappa, grid, workers):
    jobs = [(float(a), kappa, grid) for a in a_values]
    if workers and workers > 1:
        # map keeps submission order, so results do not depend on scheduling
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_point, jobs))
    else:
        out = [_point(j) for j in jobs]
    F, Fp = (np.array(col) for col in zip(*out))
    return F, Fp


def sweep_fmap(
    kappa: float,
    n_samples: int,
    grid: Grid1D,
    *,
    extra: tuple[float, ...] = (),
    workers: int | None = None,
) -> FMapTable:
    """Uniform sweep on ``[0, 1]`` mirrored onto ``[1, 2]`` with ``F(2-a) = 2 - F(a)``."""
    if n_samples < 11:
        raise ValueError("n_samples must be at least 11")
    a = np.linspace(0.0, 1.0, int(n_samples))
    extra_pts = [e for e in extra if 0.0 <= e <= 1.0]
    if extra_pts:
        a = np.unique(np.concatenate([a, extra_pts]))
    F, Fp = _evaluate(a, kappa, grid, workers)
    lower = a < 1.0
    a_all = np.concatenate([a, 2.0 - a[lower][::-1]])
    F_all = np.concatenate([F, 2.0 - F[lower][::-1]])
    Fp_all = np.concatenate([Fp, Fp[lower][::-1]])
    return FMapTable(float(kappa), a_all, F_all, Fp_all)


@dataclass(frozen=True)
class FixedPointReport:
    kappa: float
    fixed_points: list
    brackets: list
    residuals: list
    contraction_bound: float
    near_one_slope: float
    probe_slopes: dict
    anomaly: bool
    notes: list = field(default_factory=list)
    threshold_estimate: float | None = None

    @property
    def points(self) -> list[float]:
        return [a for a, _ in self.fixed_points]

    @property
    def self_organizing(self) -> list[float]:
        return [a for a, kind in self.fixed_points if kind == "self_organizing"]

    def three_point_structure(self) -> bool:
        so = self.self_organizing
        return (not self.anomaly and len(self.fixed_points) == 3 and len(so) == 2
                and abs(so[0] + so[1] - 2.0) < 1e-8)

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "fixed_points": [{"a": a, "kind": k} for a, k in self.fixed_points],
            "brackets": [list(b) for b in self.brackets],
            "residuals": list(self.residuals),
            "contraction_bound": self.contraction_bound,
            "near_one_slope": self.near_one_slope,
            "probe_slopes": {f"{t:g}": s for t, s in self.probe_slopes.items()},
            "anomaly": self.anomaly,
            "notes": list(self.notes),
            "threshold_estimate": self.threshold_estimate,
        }


def find_fixed_points(
    table: FMapTable,
    grid: Grid1D,
    *,
    delta: float = DELTA,
    tau0: float = TAU0,
    tol: float = FIXED_POINT_TOL,
) -> FixedPointReport:
    """Bracket the sign changes of ``g = F - a`` below 1 and refine them.

    The table is augmented with the probes ``1 - tau/kappa``; ``a = 1`` is
    always a fixed point and self-organizing roots are mirrored to ``2 - a``.
    """
    kappa = table.kappa
    probe_lin = {t: solve_linearized(solve_ergodic(1.0 - t / kappa, kappa, grid))
                 for t in PROBE_TAUS if 1.0 - t / kappa > 0}
    probe_slopes = {t: lin.fprime_quadratic for t, lin in probe_lin.items()}
    probe_F = {1.0 - t / kappa: eval_F(lin.base) for t, lin in probe_lin.items()}

    keep = table.a_samples < 1.0
    pts = dict(zip(table.a_samples[keep], table.F_values[keep]))
    pts.update(probe_F)
    a = np.array(sorted(pts))
    g = np.array([pts[x] - x for x in a])

    def gfun(x):
        return eval_F(solve_ergodic(x, kappa, grid)) - x

    fixed, brackets, residuals, notes = [], [], [], []
    sign_change = [i for i in range(a.size - 1) if g[i] == 0 or g[i] * g[i + 1] < 0]
    for i in sign_change:
        lo, hi = a[i], a[i + 1]
        if g[i] == 0:
            root = lo
        else:
            root = brentq(gfun, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        r = gfun(root)
        if abs(r) > tol:
            notes.append(f"root near {root:.6g} only reached |g| = {abs(r):.2e}")
        fixed.append(root)
        brackets.append((float(lo), float(hi)))
        residuals.append(float(r))

    cutoff = 1.0 - tau0 / kappa
    anomaly = sum(1 for i in sign_change if a[i + 1] <= cutoff) > 1
    if anomaly:
        notes.append("more than one sign change below 1 - tau0/kappa")
    r1 = gfun(1.0)
    out = [(float(x), "self_organizing") for x in fixed]
    out.append((1.0, "incoherent"))
    out += [(2.0 - float(x), "self_organizing") for x in reversed(fixed)]
    res_all = residuals + [r1] + [-r for r in reversed(residuals)]
    br_all = brackets + [(1.0, 1.0)] + [(2.0 - b, 2.0 - a_) for a_, b in reversed(brackets)]

    sel = (table.a_samples <= 1.0 - delta)
    contraction = float(np.max(table.Fprime_values[sel])) if np.any(sel) else float("nan")
    return FixedPointReport(
        kappa=kappa,
        fixed_points=out,
        brackets=br_all,
        residuals=res_all,
        contraction_bound=contraction,
        near_one_slope=probe_slopes.get(tau0, float("nan")),
        probe_slopes=probe_slopes,
        anomaly=anomaly,
        notes=notes,
    )


def asymptotic_fixed_point(kappa: float) -> float:
    """Small root of ``a = 1/(2 sqrt(kappa (1 - a)))``, the large-kappa estimate of the synchronized level."""
    f = lambda a: a - 0.5 / math.sqrt(kappa * (1.0 - a))  # noqa: E731
    if f(0.5) <= 0:
        raise ValueError(f"no small asymptotic root for kappa = {kappa}")
    return brentq(f, 0.0, 0.5, xtol=1e-15)


def estimate_threshold(
    kappa_range,
    grid: Grid1D,
    *,
    n_samples: int = 41,
    workers: int | None = None,
) -> tuple[float, dict]:
    """Smallest sampled kappa from which on every sample shows ``{a_bar, 1, 2 - a_bar}``.

    Empirical only: returns the estimate and the per-kappa fixed-point counts.
    """
    ks = [float(k) for k in kappa_range]
    if len(ks) < 2:
        raise ValueError("kappa_range needs at least two values")
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError("kappa_range must be strictly increasing")
    if ks[0] > 4 or ks[-1] < 100:
        raise ValueError("kappa_range must span at least [4, 100]")
    ok, counts = {}, {}
    for k in ks:
        rep = find_fixed_points(sweep_fmap(k, n_samples, grid, workers=workers), grid)
        ok[k] = rep.three_point_structure()
        counts[k] = len(rep.fixed_points)
    est = None
    for k in reversed(ks):
        if not ok[k]:
            break
        est = k
    if est is None:
        raise RuntimeError(f"three-point structure never stabilizes; counts per kappa: {counts}")
    return est, counts


@dataclass(frozen=True)
class MapIteration:
    iterates: np.ndarray
    rates: np.ndarray
    converged: bool


def iterate_map(kappa: float, grid: Grid1D, a0: float = 0.0, n_iter: int = 30,
                tol: float = 1e-12) -> MapIteration:
    """Picard iteration ``a <- F(a)`` with the observed contraction ratios."""
    seq = [float(a0)]
    for _ in range(n_iter):
        nxt = eval_F(solve_ergodic(seq[-1], kappa, grid))
        seq.append(nxt)
        if abs(nxt - seq[-2]) <= tol:
            break
    s = np.array(seq)
    d = np.abs(np.diff(s))
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = np.where(d[:-1] > 1e-14, d[1:] / d[:-1], np.nan)
    return MapIteration(s, rates, bool(d.size and d[-1] <= tol))


def self_organizing_level(kappa: float, grid: Grid1D, n_samples: int = 21) -> float:
    """The synchronized fixed point in ``[0, 1)`` (the smallest one if several)."""
    rep = find_fixed_points(sweep_fmap(kappa, n_samples, grid), grid)
    so = [a for a in rep.self_organizing if a < 1.0]
    if not so:
        raise RuntimeError(f"no self-organizing fixed point found for kappa = {kappa}")
    return so[0]


def self_organizing_solution(kappa: float, grid: Grid1D, n_samples: int = 21):
    """Ergodic solution at the synchronized fixed point on ``grid``."""
    return solve_ergodic(self_organizing_level(kappa, grid, n_samples), kappa, grid)
