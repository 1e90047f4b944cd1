import json
import subprocess
import sys

import numpy as np
import pytest

from yeefem.cli import load_run, main, parse_levels
from yeefem.mesh import read_mesh


def test_parse_levels():
    assert parse_levels("3..6") == [3, 4, 5, 6]
    assert parse_levels("1,2,4") == [1, 2, 4]
    with pytest.raises(Exception):
        parse_levels("")


def test_mesh_commands(tmp_path, capsys):
    out = tmp_path / "m0.txt"
    assert main(["mesh", "gen", "--level", "0", "--out", str(out)]) == 0
    fine = tmp_path / "m1.txt"
    assert main(["mesh", "refine", str(out), "--out", str(fine)]) == 0
    assert read_mesh(fine).n_triangles == 4 * read_mesh(out).n_triangles
    capsys.readouterr()
    assert main(["mesh", "info", str(fine)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["interface_edges"] == 32
    assert info["dofs"] == 2 * info["edges"]


def test_run_and_export(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"snapshot_times": [1.5, 2.0]}))
    run_dir = tmp_path / "run"
    assert main(["run", "--method", "n0plus", "--level", "1", "--T", "2.0",
                 "--config", str(cfg), "--out", str(run_dir)]) == 0
    meta = json.loads((run_dir / "run.json").read_text())
    assert meta["method"] == "N0plus" and meta["scenario"]["final_time"] == 2.0
    header = (run_dir / "energy.csv").read_text().splitlines()[0]
    assert header == "step,t,kinetic,curl,corr1,corr2,total"
    rec = load_run(run_dir)
    assert sorted(rec.snapshots) == [1.5, 2.0]
    assert main(["export", str(run_dir), "--t", "2.0", "--out", str(tmp_path / "f.csv")]) == 0
    data = np.loadtxt(tmp_path / "f.csv", delimiter=",", skiprows=1)
    assert len(data) == rec.mesh.n_triangles
    assert main(["export", str(run_dir), "--t", "2.0", "--format", "vtk-legacy"]) == 0
    assert (run_dir / "field_t2.vtk").exists()


def test_missing_snapshot_is_an_error(tmp_path, capsys):
    run_dir = tmp_path / "run"
    assert main(["run", "--level", "0", "--T", "0.5", "--out", str(run_dir)]) == 0
    assert main(["export", str(run_dir), "--t", "0.3"]) == 1
    assert "available" in capsys.readouterr().err


def test_bad_config_is_reported(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 1
    assert "unknown scenario keys" in capsys.readouterr().err


def test_convergence_and_cfl_commands(tmp_path):
    conv = tmp_path / "conv.csv"
    assert main(["convergence", "--levels", "0..2", "--T", "2.0", "--out", str(conv)]) == 0
    assert conv.read_text().splitlines()[0] == "h,dofs,error,eoc"
    cfl = tmp_path / "cfl.csv"
    assert main(["cfl", "--levels", "0,1", "--sigma0", "--out", str(cfl)]) == 0
    rows = np.loadtxt(cfl, delimiter=",", skiprows=1)
    assert np.allclose(rows[:, 1], rows[:, 2], rtol=1e-12)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "yeefem", "--help"], capture_output=True,
                         text=True, check=True)
    assert "convergence" in res.stdout
