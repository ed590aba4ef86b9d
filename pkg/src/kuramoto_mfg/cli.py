"""Command-line runner: configuration, dispatch and serialization.

Exit status is 0 when every asserted check passed, 2 when a named check
failed and 1 on usage errors (bad flags, unreadable config, unwritable
output directory).
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .grid import make_grid, integrate

COMMANDS = ("ergodic", "fmap", "fixed-points", "threshold", "dynamic", "turnpike", "constants", "lemmas")
OUT_DIR_ENV = "KMFG_OUT_DIR"

# default cell counts per command
_DEFAULT_N = {"turnpike": 256, "dynamic": 256, "fmap": 1024, "fixed-points": 1024,
              "threshold": 512, "constants": 2048, "ergodic": 1024, "lemmas": 8}
_DEFAULT_KAPPAS = {"threshold": [2.0, 4.0, 6.0, 8.0, 12.0, 20.0, 50.0, 100.0],
                   "constants": [100.0, 400.0, 1600.0]}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    kappa: list = field(default_factory=lambda: [100.0])
    a: list = field(default_factory=lambda: [0.0])
    n_cells: int = 1024
    samples: int = 41
    T: float = 2.0
    dt: float | None = None
    theta: float = 0.5
    tol: float = 1e-10
    max_iter: int = 300
    perturb: float = 0.05
    seed: int = 0
    workers: int = 1
    stride: int | None = None
    out_dir: str = "results"

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if not self.kappa or any(not (k > 0 and math.isfinite(k)) for k in self.kappa):
            raise UsageError("kappa must be positive")
        if any(not 0.0 <= a <= 2.0 for a in self.a):
            raise UsageError("a must lie in [0, 2]")
        if self.n_cells < 8 or self.n_cells % 2:
            raise UsageError("n must be an even integer >= 8")
        if not 0.0 < self.theta <= 1.0:
            raise UsageError("theta must lie in (0, 1]")
        if not self.tol > 0:
            raise UsageError("tol must be positive")
        if not self.T > 0:
            raise UsageError("T must be positive")
        if self.dt is not None and not self.dt > 0:
            raise UsageError("dt must be positive")
        if self.samples < 11:
            raise UsageError("samples must be at least 11")
        if self.max_iter < 1 or self.workers < 1:
            raise UsageError("max_iter and workers must be positive")
        if self.stride is not None and self.stride < 1:
            raise UsageError("stride must be positive")
        if not 0.0 <= self.perturb < 1.0:
            raise UsageError("perturb must lie in [0, 1)")
        return self


_FLOAT_LISTS = {"kappa", "a"}
_INTS = {"n_cells", "samples", "max_iter", "seed", "workers", "stride"}
_FLOATS = {"T", "dt", "theta", "tol", "perturb"}
_ALIASES = {"n": "n_cells", "kappas": "kappa", "out-dir": "out_dir", "max-iter": "max_iter"}


def _coerce(key: str, raw):
    try:
        if key in _FLOAT_LISTS:
            if isinstance(raw, (list, tuple)):
                return [float(v) for v in raw]
            return [float(v) for v in str(raw).replace(",", " ").split()]
        if key in _INTS:
            return int(raw)
        if key in _FLOATS:
            return float(raw)
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {raw!r}") from exc
    return str(raw)


def load_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in RunConfig.__dataclass_fields__ or key == "command":
            raise UsageError(f"{path}:{no}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--out-dir", dest="out_dir", help=f"output directory (default ${OUT_DIR_ENV} or ./results)")
    common.add_argument("--kappa", "--kappas", dest="kappa", type=float, nargs="+")
    common.add_argument("--a", type=float, nargs="+")
    common.add_argument("--n", dest="n_cells", type=int, help="number of cells")
    common.add_argument("--samples", type=int, help="sweep samples on [0, 1]")
    common.add_argument("--T", type=float, help="horizon")
    common.add_argument("--dt", type=float, help="time step (default h^2/2)")
    common.add_argument("--theta", type=float, help="Picard damping")
    common.add_argument("--tol", type=float, help="Picard tolerance")
    common.add_argument("--max-iter", dest="max_iter", type=int)
    common.add_argument("--perturb", type=float, help="cos-mode amplitude of the initial perturbation")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, help="processes for sweeps")
    common.add_argument("--stride", type=int, help="time stride of the trajectory dump")

    p = _Parser(prog="kmfg", description="Kuramoto mean field game experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "ergodic": "stationary solution for each a",
        "fmap": "sweep of a -> F(a)",
        "fixed-points": "fixed points of F",
        "threshold": "empirical onset of the three-point structure",
        "dynamic": "finite-horizon trajectory from a perturbed density",
        "turnpike": "trajectory plus every stability estimate",
        "constants": "C_P, Q and derived constants per kappa",
        "lemmas": "randomized suites for the decay lemmas",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def make_config(argv=None) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    values = {"n_cells": _DEFAULT_N[command]}
    if command in _DEFAULT_KAPPAS:
        values["kappa"] = list(_DEFAULT_KAPPAS[command])
    if os.environ.get(OUT_DIR_ENV):
        values["out_dir"] = os.environ[OUT_DIR_ENV]
    cfg_path = args.pop("config", None)
    if cfg_path:
        values.update(load_config(cfg_path))
    values.update({k: _coerce(k, v) for k, v in args.items()})
    return RunConfig(command=command, **values).validate()


def _tag(k: float) -> str:
    return f"{k:g}"


# ------------------------------------------------------------------ commands


def _check(checks: dict, name: str, passed: bool, **info):
    checks[name] = {"passed": bool(passed), **info}


def _run_ergodic(cfg, out, checks):
    from .ergodic import solve_ergodic

    files = []
    for k in cfg.kappa:
        grid = make_grid(math.pi, cfg.n_cells)
        for a in cfg.a:
            sol = solve_ergodic(a, k, grid)
            stem = f"ergodic_a{_tag(a)}_k{_tag(k)}"
            files.append(io.write_csv(out / f"{stem}.csv", {"x": grid.x, "u": sol.u, "m": sol.m}))
            files.append(io.write_json(out / f"{stem}.json", {
                "a": a, "kappa": k, "lambda": sol.lam, "eigenvalue": sol.eigenvalue,
                "residual": sol.hjb_residual, "eig_residual": sol.eig_residual, "n_cells": cfg.n_cells,
            }))
            _check(checks, f"{stem}.mass", abs(integrate(grid, sol.m) - 1.0) <= 1e-10)
            _check(checks, f"{stem}.positivity", bool(np.all(sol.m > 0)))
    return files


def _run_fmap(cfg, out, checks):
    from .equilibria import sweep_fmap

    files = []
    grid = make_grid(math.pi, cfg.n_cells)
    for k in cfg.kappa:
        tab = sweep_fmap(k, cfg.samples, grid, workers=cfg.workers)
        files.append(io.write_csv(out / f"fmap_{_tag(k)}.csv",
                                  {"a": tab.a_samples, "F": tab.F_values, "Fprime": tab.Fprime_values}))
        _check(checks, f"fmap_{_tag(k)}.monotone", tab.monotone())
        _check(checks, f"fmap_{_tag(k)}.symmetry", tab.symmetry_error() <= 1e-8,
               value=tab.symmetry_error())
    return files


def _run_fixed_points(cfg, out, checks):
    from .equilibria import FIXED_POINT_TOL, find_fixed_points, sweep_fmap

    files = []
    grid = make_grid(math.pi, cfg.n_cells)
    for k in cfg.kappa:
        rep = find_fixed_points(sweep_fmap(k, cfg.samples, grid, workers=cfg.workers), grid)
        files.append(io.write_json(out / f"fixed_points_{_tag(k)}.json", rep.to_dict()))
        worst = max(abs(r) for r in rep.residuals)
        _check(checks, f"fixed_points_{_tag(k)}.residual", worst <= FIXED_POINT_TOL, value=worst)
        _check(checks, f"fixed_points_{_tag(k)}.no_anomaly", not rep.anomaly)
    return files


def _run_threshold(cfg, out, checks):
    from .equilibria import estimate_threshold

    grid = make_grid(math.pi, cfg.n_cells)
    try:
        est, counts = estimate_threshold(cfg.kappa, grid, n_samples=cfg.samples, workers=cfg.workers)
        ok = True
    except RuntimeError as exc:
        est, counts, ok = None, {}, False
        checks["threshold.stable"] = {"passed": False, "reason": str(exc)}
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if ok:
        _check(checks, "threshold.stable", True)
    data = {"estimate": est, "counts": {_tag(k): c for k, c in counts.items()},
            "kappas": cfg.kappa, "n_cells": cfg.n_cells, "samples": cfg.samples}
    return [io.write_json(out / "threshold.json", data)]


def _stride(cfg, n_steps):
    return cfg.stride or max(1, n_steps // 200)


def _dump_trajectory(path, traj, stride):
    rows = np.arange(0, traj.times.size, stride)
    if rows[-1] != traj.times.size - 1:
        rows = np.append(rows, traj.times.size - 1)
    nx = traj.grid.n_cells
    return io.write_csv(path, {
        "t": np.repeat(traj.times[rows], nx),
        "x": np.tile(traj.grid.x, rows.size),
        "u": traj.u[rows].ravel(),
        "m": traj.m[rows].ravel(),
    })


def _phi_csv(path, dev):
    return io.write_csv(path, {"t": dev.times / math.sqrt(dev.kappa), "phi": dev.phi,
                               "phi_physical": dev.phi_physical, "hypothesis_ok": dev.hypothesis_ok})


def _run_dynamic(cfg, out, checks):
    from .dynamic import compute_phi, perturbed_density, solve_mfg, trajectory_residuals
    from .equilibria import self_organizing_solution

    k = cfg.kappa[0]
    grid = make_grid(math.pi, cfg.n_cells)
    st = self_organizing_solution(k, grid)
    m0 = perturbed_density(st, cfg.perturb)
    traj = solve_mfg(grid, m0, st.u, k, cfg.T, cfg.dt, theta=cfg.theta, tol=cfg.tol,
                     max_iter=cfg.max_iter, guess=st.m)
    dev = compute_phi(traj, st)
    res = trajectory_residuals(traj)
    files = [_dump_trajectory(out / "trajectory.csv", traj, _stride(cfg, traj.n_steps)),
             _phi_csv(out / "phi.csv", dev)]
    files.append(io.write_json(out / "run.json", {
        "kappa": k, "T": traj.T, "dt": traj.dt, "n": cfg.n_cells, "theta": cfg.theta,
        "tol": cfg.tol, "iterations": traj.iterations, "converged": traj.converged,
        "a_bar": st.a, "perturb": cfg.perturb, "residuals": res,
    }))
    _check(checks, "dynamic.picard_converged", traj.converged)
    _check(checks, "dynamic.positivity", res["min_m"] > 0, value=res["min_m"])
    _check(checks, "dynamic.mass", res["mass"] <= 1e-12, value=res["mass"])
    return files


def _run_turnpike(cfg, out, checks):
    from .turnpike import run_turnpike

    run = run_turnpike(cfg.kappa[0], cfg.T, cfg.perturb, cfg.n_cells, cfg.dt, theta=cfg.theta,
                       tol=cfg.tol, max_iter=cfg.max_iter, seed=cfg.seed)
    rep = run.report
    files = [_phi_csv(out / "phi.csv", run.deviations),
             io.write_json(out / "report.json", rep.to_dict())]
    for name, c in rep.checks.items():
        if c.get("applicable", True):
            _check(checks, f"turnpike.{name}", c["passed"])
    return files


def _run_constants(cfg, out, checks):
    from .analysis import stability_constants
    from .equilibria import self_organizing_solution

    grid = make_grid(math.pi, cfg.n_cells)
    rows = {k: [] for k in ("kappa", "a_bar", "C_P", "Q", "c_dom", "C_turnpike", "omega", "C_integral")}
    for k in cfg.kappa:
        st = self_organizing_solution(k, grid)
        c = stability_constants(st)
        for key, v in (("kappa", k), ("a_bar", st.a), ("C_P", c.C_P), ("Q", c.Q), ("c_dom", c.c_dom),
                       ("C_turnpike", c.C_turnpike), ("omega", c.omega), ("C_integral", c.C_integral)):
            rows[key].append(v)
        _check(checks, f"constants_{_tag(k)}.finite", math.isfinite(c.C_P) and math.isfinite(c.Q))
    if len(cfg.kappa) > 1:
        for key in ("C_P", "Q"):
            ratio = max(rows[key]) / min(rows[key])
            _check(checks, f"constants.{key}_uniform", ratio <= 2.0, value=ratio)
    return [io.write_csv(out / "constants.csv", rows)]


def _run_lemmas(cfg, out, checks):
    from .analysis import lemma_suites

    res = lemma_suites(cfg.seed)
    for name, c in res.items():
        _check(checks, f"lemmas.{name}", c["passed"])
    return [io.write_json(out / "lemmas.json", {"seed": cfg.seed, "suites": res})]


_DISPATCH = {
    "ergodic": _run_ergodic,
    "fmap": _run_fmap,
    "fixed-points": _run_fixed_points,
    "threshold": _run_threshold,
    "dynamic": _run_dynamic,
    "turnpike": _run_turnpike,
    "constants": _run_constants,
    "lemmas": _run_lemmas,
}


def _prepare_out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def run(config: RunConfig) -> tuple[int, list, dict]:
    """Execute one command; returns (exit status, written files, checks)."""
    config.validate()
    out = _prepare_out_dir(config.out_dir)
    start = time.perf_counter()
    checks: dict = {}
    try:
        files = _DISPATCH[config.command](config, out, checks)
    except OSError as exc:
        raise UsageError(f"cannot write to {out}: {exc}") from exc
    failed = [k for k, c in checks.items() if not c["passed"]]
    status = 2 if failed else 0
    manifest = io.write_manifest(out, config.command, asdict(config), files,
                                 time.perf_counter() - start, status, failed)
    return status, [*files, manifest], checks


def main(argv=None) -> int:
    try:
        cfg = make_config(argv)
        status, files, checks = run(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    for name, c in checks.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name}")
    for f in files:
        print(f"wrote {f}")
    if status:
        failed = ", ".join(k for k, c in checks.items() if not c["passed"])
        print(f"check failed: {failed}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
