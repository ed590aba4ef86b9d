import json
import math

import numpy as np
import pytest

from kuramoto_mfg import cli, io


def _run(argv, tmp_path):
    return cli.main([*argv, "--out-dir", str(tmp_path)])


def test_lemmas_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["lemmas", "--seed", "7", "--out-dir", str(a)]) == 0
    assert cli.main(["lemmas", "--seed", "7", "--out-dir", str(b)]) == 0
    assert (a / "lemmas.json").read_bytes() == (b / "lemmas.json").read_bytes()
    man = json.loads((a / "manifest.json").read_text())
    assert man["files"][0]["file"] == "lemmas.json"
    assert man["files"][0]["sha256"] == io.sha256(a / "lemmas.json")
    assert {"python", "numpy", "scipy", "package"} <= set(man["versions"])
    assert "PASS lemmas.cosh_family" in capsys.readouterr().out


def test_fmap_output(tmp_path):
    assert _run(["fmap", "--kappa", "100", "--samples", "11", "--n", "256"], tmp_path) == 0
    path = tmp_path / "fmap_100.csv"
    raw = path.read_bytes()
    assert b"\r" not in raw
    assert raw.splitlines()[0] == b"a,F,Fprime"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (21, 3)
    assert np.all(np.diff(data[:, 1]) >= 0)


def test_fixed_points_and_constants(tmp_path):
    assert _run(["fixed-points", "--kappa", "100", "--samples", "21", "--n", "512"], tmp_path) == 0
    rep = json.loads((tmp_path / "fixed_points_100.json").read_text())
    assert len(rep["fixed_points"]) == 3
    assert _run(["constants", "--kappa", "100", "400", "--n", "1024"], tmp_path) == 0
    head = (tmp_path / "constants.csv").read_text().splitlines()[0]
    assert head.startswith("kappa,a_bar,C_P,Q")


def test_ergodic_and_dynamic(tmp_path):
    assert _run(["ergodic", "--a", "0", "1.5", "--kappa", "50", "--n", "128"], tmp_path) == 0
    meta = json.loads((tmp_path / "ergodic_a1.5_k50.json").read_text())
    assert set(meta) >= {"a", "kappa", "lambda", "residual"}
    assert _run(["dynamic", "--kappa", "20", "--T", "0.2", "--n", "64", "--theta", "1"], tmp_path) == 0
    run = json.loads((tmp_path / "run.json").read_text())
    assert run["converged"] and run["n"] == 64
    assert (tmp_path / "phi.csv").read_text().splitlines()[0] == "t,phi,phi_physical,hypothesis_ok"


@pytest.mark.parametrize(
    "argv",
    [
        ["unknown"],
        ["fmap", "--kappa", "-1"],
        ["fmap", "--n", "7"],
        ["turnpike", "--theta", "1.5"],
        ["dynamic", "--tol", "0"],
        ["fmap", "--bogus"],
        ["fmap", "--config", "/does/not/exist"],
        [],
    ],
)
def test_usage_errors_exit_1(argv, tmp_path, capsys):
    assert cli.main([*argv, "--out-dir", str(tmp_path)] if argv else []) == 1
    assert "usage error" in capsys.readouterr().err


def test_unwritable_out_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["lemmas", "--out-dir", str(blocker / "sub")]) == 1


def test_config_file_and_overrides(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sweep\nkappa = 50, 100\nsamples = 15\nn = 128\nseed=3\n")
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path / "env"))
    c = cli.make_config(["fmap", "--config", str(cfg), "--samples", "21"])
    assert c.kappa == [50.0, 100.0] and c.samples == 21 and c.n_cells == 128 and c.seed == 3
    assert c.out_dir == str(tmp_path / "env")
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    with pytest.raises(cli.UsageError):
        cli.load_config(bad)
    bad.write_text("kappa 3\n")
    with pytest.raises(cli.UsageError):
        cli.load_config(bad)


def test_failed_check_exits_2(tmp_path, monkeypatch, capsys):
    def failing(cfg, out, checks):
        checks["demo.always_fails"] = {"passed": False}
        return [io.write_json(out / "x.json", {})]

    monkeypatch.setitem(cli._DISPATCH, "lemmas", failing)
    assert cli.main(["lemmas", "--out-dir", str(tmp_path)]) == 2
    assert "demo.always_fails" in capsys.readouterr().err
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["failed_checks"] == ["demo.always_fails"] and man["exit_status"] == 2


def test_csv_dialect(tmp_path):
    p = io.write_csv(tmp_path / "t.csv", {"v": [0.1, math.pi, 1e-300], "flag": [True, False, True]})
    lines = p.read_bytes().split(b"\n")
    assert lines[0] == b"v,flag"
    assert lines[1] == b"0.10000000000000001,1"
    back = np.loadtxt(p, delimiter=",", skiprows=1)
    assert np.array_equal(back[:, 0], [0.1, math.pi, 1e-300])
    with pytest.raises(ValueError):
        io.write_csv(tmp_path / "u.csv", {"a": [1, 2], "b": [1]})
