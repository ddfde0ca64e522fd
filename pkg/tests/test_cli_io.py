import json

import numpy as np
import pytest

from lilypond import tolerance
from lilypond.cli import run
from lilypond.experiments import ExperimentReport
from lilypond.geometry import Config
from lilypond.io import (
    InputError,
    RunConfig,
    read_config_file,
    read_points,
    read_radii,
    read_report,
    serialize_report,
    write_points,
    write_radii,
)


@pytest.fixture
def chain_file(tmp_path):
    p = tmp_path / "chain.txt"
    p.write_text("# four point chain\n0\n1\n3\n7\n")
    return p


def test_points_round_trip(tmp_path):
    pts = np.random.default_rng(0).random((20, 3)) * 1e3
    write_points(tmp_path / "p.txt", Config(pts))
    back = read_points(tmp_path / "p.txt")
    assert np.array_equal(back.points, pts)


def test_radii_round_trip(tmp_path):
    r = np.array([0.1, 1 / 3, 2.5e-17])
    write_radii(tmp_path / "r.txt", r)
    assert np.array_equal(read_radii(tmp_path / "r.txt", 3), r)
    with pytest.raises(InputError):
        read_radii(tmp_path / "r.txt", 4)


@pytest.mark.parametrize(
    "text",
    ["0 1\n2\n", "0 x\n", "nan 1\n", "1\n1\n"],
)
def test_bad_point_files(tmp_path, text):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(InputError):
        read_points(p)


def test_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("d = 2\nreps=500  # comment\nn-grid = 250,500\n")
    vals = read_config_file(p)
    assert vals == {"d": 2, "reps": 500, "n_grid": "250,500"}
    cfg = RunConfig.build("clt", vals, {"reps": 1000, "d": None}, allowed={"d", "reps", "n_grid"})
    assert (cfg.d, cfg.reps, cfg.grids["n_grid"]) == (2, 1000, [250, 500])
    p.write_text("bogus = 1\n")
    with pytest.raises(InputError):
        read_config_file(p)
    with pytest.raises(InputError):
        RunConfig.build("solve", {"reps": 3}, {}, allowed={"points"})


def _report(cells):
    return ExperimentReport(
        "demo",
        {"d": 2, "grid": [0.5, 1.0]},
        ["name", "n", "p", "ok"],
        cells,
        {"note": "x", "value": 0.1},
        raw=[{"rep": 0, "v": 1.5}],
    )


def test_report_round_trip(tmp_path):
    rep = _report([{"name": "a", "n": 3, "p": 1 / 3, "ok": True}, {"name": "b", "n": 4, "p": 0.25, "ok": False}])
    paths = serialize_report(rep, tmp_path / "out" / "demo")
    assert set(paths) == {"json", "csv", "jsonl"}
    back = read_report(tmp_path / "out" / "demo")
    assert back == rep


def test_empty_report(tmp_path):
    rep = _report([])
    serialize_report(rep, tmp_path / "empty")
    back = read_report(tmp_path / "empty")
    assert back.cells == [] and back.columns == rep.columns


def test_column_order_stable(tmp_path):
    rep = _report([{"ok": True, "p": 0.5, "n": 1, "name": "z"}])
    serialize_report(rep, tmp_path / "a")
    serialize_report(read_report(tmp_path / "a"), tmp_path / "b")
    a = (tmp_path / "a.csv").read_text()
    assert a == (tmp_path / "b.csv").read_text()
    assert a.splitlines()[0] == "name,n,p,ok"


def test_report_write_error(tmp_path):
    block = tmp_path / "file"
    block.write_text("")
    with pytest.raises(OSError, match="file"):
        serialize_report(_report([]), block / "sub" / "x")


def test_cli_solve(chain_file, capsys):
    assert run(["solve", "--points", str(chain_file)]) == 0
    out = capsys.readouterr().out.split()
    assert [float(v) for v in out] == [0.5, 0.5, 1.5, 2.5]


def test_cli_verify_tampered(chain_file, tmp_path, capsys):
    good = tmp_path / "good.txt"
    bad = tmp_path / "bad.txt"
    good.write_text("0.5\n0.5\n1.5\n2.5\n")
    bad.write_text("0.5\n0.6\n1.5\n2.5\n")
    assert run(["verify", "--points", str(chain_file), "--radii", str(good)]) == 0
    assert run(["verify", "--points", str(chain_file), "--radii", str(bad)]) == 1
    assert json.loads(capsys.readouterr().out.splitlines()[-1])["ok"] is False


def test_cli_usage_errors(chain_file, tmp_path, capsys):
    assert run(["solve", "--bogus"]) == 2
    assert run(["nosuch"]) == 2
    assert run(["solve", "--points", str(tmp_path / "missing.txt")]) == 2
    cfg = tmp_path / "c.cfg"
    cfg.write_text("nonsense = 3\n")
    assert run(["solve", "--points", str(chain_file), "--config", str(cfg)]) == 2
    cfg.write_text("reps = 3\n")
    assert run(["solve", "--points", str(chain_file), "--config", str(cfg)]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_eps_restored(chain_file, capsys):
    old = tolerance.EPS_GEO
    assert run(["solve", "--points", str(chain_file), "--eps", "1e-6"]) == 0
    assert tolerance.EPS_GEO == old


def test_cli_stab_and_cluster(tmp_path, capsys):
    p = tmp_path / "p.txt"
    p.write_text("1\n3\n")
    assert run(["stab", "--points", str(p), "--r-cap", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["R"] == 2.0 and out["Rex"] == "inf"
    p.write_text("0\n1\n10\n11\n")
    assert run(["cluster", "--points", str(p)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["labels"] == [0, 0, 1, 1]
    assert [c["cardinality"] for c in out["clusters"]] == [2, 2]


def test_cli_experiment_report(tmp_path, capsys):
    base = tmp_path / "pz"
    assert run(["pz", "--d", "1", "--reps", "100", "--seed", "2", "--out", str(base)]) == 0
    rep = read_report(base)
    assert rep.experiment == "pz" and len(rep.cells) == 2
    assert run(["pz", "--reps", "100"]) == 2
