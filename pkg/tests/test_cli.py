import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from conflimit.cli import main
from conflimit.config import ConfigError, RunConfig, load_config

ZERO_DEGREE_CFG = """
[surface]
circumradius = 1.0
target_edge_length = 0.07

[family]
name = "zero_degree"
c = [1, 0]
k = [4, 0]

[parameters]
hbar = [1, 0]
R = 0.5

[limit]
R_list = [1, 0.5, 0.25]
"""


def write_cfg(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_zero_degree_report_passes(tmp_path, capsys):
    cfg = write_cfg(tmp_path, ZERO_DEGREE_CFG)
    out = tmp_path / "out"
    assert main(["report", "--config", str(cfg), "--out", str(out)]) == 0
    summ = json.loads((out / "report_summary.json").read_text())
    assert abs(summ["beltrami"]["sup_norm"] - 0.25) <= 1e-12
    assert summ["holonomy"]["relation_defect"] < 1e-8
    assert all(c["passed"] for c in summ["checks"])
    for f in ("mesh_vertices.csv", "mesh_triangles.csv", "surface.ini", "field.csv", "holonomy.json",
              "beltrami.csv", "beltrami.json", "reality.json", "convergence.csv", "heatmap.csv", "plot.gp"):
        assert (out / f).exists(), f
    assert "PASS beltrami" in capsys.readouterr().out


def test_reruns_are_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, ZERO_DEGREE_CFG)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["report", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["report", "--config", str(cfg), "--out", str(b)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n


def test_inadmissible_config_exits_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, ZERO_DEGREE_CFG.replace("R = 0.5", "R = 1.2"))
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "inadmissible parameters" in capsys.readouterr().err


@pytest.mark.parametrize("bad", ['name = "oper"', "c = 1j", "bogus = 1"])
def test_malformed_config_exits_2(tmp_path, bad):
    text = ZERO_DEGREE_CFG.replace('name = "zero_degree"', 'name = "zero_degree"\n' + bad)
    if bad.startswith("name"):
        text = ZERO_DEGREE_CFG.replace('name = "zero_degree"', bad)
    cfg = write_cfg(tmp_path, text)
    assert main(["mesh", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_unknown_check_exits_2(tmp_path):
    cfg = write_cfg(tmp_path, ZERO_DEGREE_CFG)
    assert main(["mesh", "--config", str(cfg), "--check", "nonsense"]) == 2


def test_solver_failure_exits_3(tmp_path):
    text = ZERO_DEGREE_CFG.replace("[limit]", "[solver]\nmax_iter = 1\ntolerance = 1e-15\n\n[limit]")
    text = text.replace('name = "zero_degree"', 'name = "hitchin"')
    cfg = write_cfg(tmp_path, text)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_failed_check_exits_4_and_names_it(tmp_path, capsys):
    text = ZERO_DEGREE_CFG.replace('name = "zero_degree"', 'name = "hitchin"')
    cfg = write_cfg(tmp_path, text)
    assert main(["holonomy", "--config", str(cfg), "--out", str(tmp_path / "o"),
                 "--check", "relation"]) == 4
    assert "invariant violated: relation" in capsys.readouterr().err


def test_empty_grid_gives_empty_report(tmp_path):
    cfg = write_cfg(tmp_path, ZERO_DEGREE_CFG + "\n[sweep]\nhbar = []\nR = [0.5]\n")
    out = tmp_path / "o"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "sweep.json").read_text())
    assert rep["n_points"] == 0 and rep["rows"] == []
    assert len((out / "sweep.csv").read_text().splitlines()) == 1


def test_zero_degree_sweep_column_equals_grid(tmp_path):
    ts = [0.1, 0.3, 0.5, 0.7, 0.9]
    grid = ", ".join(str(math.sqrt(t)) for t in ts)
    cfg = write_cfg(tmp_path, ZERO_DEGREE_CFG + f"\n[sweep]\nhbar = [[1, 0], [0, 1]]\nR = [{grid}]\n")
    out = tmp_path / "o"
    assert main(["sweep", "--config", str(cfg), "--out", str(out), "--jobs", "2"]) == 0
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["index"]) for r in rows] == list(range(10))
    for r, t in zip(rows, ts + ts):
        assert r["status"] == "ok"
        assert abs(float(r["sup_mu"]) - t) <= 1e-12
        assert float(r["relation_defect"]) <= 1e-8
    first = (out / "sweep.csv").read_bytes()
    assert main(["sweep", "--config", str(cfg), "--out", str(out), "--jobs", "1"]) == 0
    assert (out / "sweep.csv").read_bytes() == first


def test_hitchin_equal_invariant_rows(tmp_path):
    text = ZERO_DEGREE_CFG.replace('name = "zero_degree"', 'name = "hitchin"').replace("c = [1, 0]", "c = [0.25, 0]")
    r2 = 0.5 / math.sqrt(2.0)
    cfg = write_cfg(tmp_path, text + f"\n[sweep]\nhbar = [[1, 0], [2, 0]]\nR = [0.5, {r2!r}]\n")
    out = tmp_path / "o"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    rows = json.loads((out / "sweep.json").read_text())["rows"]
    a = next(r for r in rows if r["hbar_re"] == 1 and r["R"] == 0.5)
    b = next(r for r in rows if r["hbar_re"] == 2 and r["R"] == r2)
    assert a["invariant_re"] == pytest.approx(b["invariant_re"], rel=1e-14)
    assert abs(a["sup_mu"] - b["sup_mu"]) <= 0.02 * a["sup_mu"]
    assert all(r["status"] == "ok" and r["sup_mu"] < 1 for r in rows)


def test_config_roundtrip_defaults():
    cfg = load_config(None)
    assert isinstance(cfg, RunConfig) and cfg.grid() == []
    with pytest.raises(ConfigError):
        RunConfig(R_list=[0.5, 1.0]).validate()


def test_console_entry_point(tmp_path):
    cfg = write_cfg(tmp_path, ZERO_DEGREE_CFG)
    res = subprocess.run([sys.executable, "-m", "conflimit.cli", "mesh", "--config", str(cfg),
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    summ = json.loads((tmp_path / "o" / "mesh_summary.json").read_text())
    assert summ["checks"][0]["name"] == "mesh"
