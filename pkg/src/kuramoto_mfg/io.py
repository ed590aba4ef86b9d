"""Deterministic CSV/JSON writers and the run manifest."""
from __future__ import annotations

import hashlib
import json
import math
import platform
from pathlib import Path

import numpy as np


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path: Path, columns: dict) -> Path:
    """Comma-separated, header row, 17 significant digits, LF line endings."""
    names = list(columns)
    cols = [np.asarray(columns[k]).ravel() for k in names]
    n = {c.size for c in cols}
    if len(n) != 1:
        raise ValueError("columns must have equal length")
    lines = [",".join(names)]
    for row in zip(*cols):
        lines.append(",".join(_fmt(v) for v in row))
    path = Path(path)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def write_json(path: Path, data) -> Path:
    path = Path(path)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        json.dump(_clean(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict:
    import scipy

    from . import __version__

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "package": __version__,
    }


def write_manifest(out_dir: Path, command: str, config: dict, files, wall_time: float,
                   status: int, failed: list) -> Path:
    entries = [{"file": Path(f).name, "sha256": sha256(f)} for f in files]
    return write_json(
        Path(out_dir) / "manifest.json",
        {
            "command": command,
            "config": config,
            "files": entries,
            "versions": versions(),
            "wall_time_seconds": wall_time,
            "exit_status": status,
            "failed_checks": failed,
        },
    )
