import json
import math
import shutil
import subprocess
import sys

import numpy as np
import pytest
import yaml

from fracperim import formats
from fracperim.cli import main
from fracperim.geometry import DensityGrid, GridDomain, IndicatorGrid, random_density


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    payload = json.loads(out.out) if out.out.strip() else None
    return code, payload, out.err


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


@pytest.fixture
def interval(tmp_path):
    n = 256
    dom = GridDomain(1, (n + 8,), 1 / n, (-4 / n,))
    cells = np.zeros(n + 8, bool)
    cells[4:4 + n] = True
    path = tmp_path / "interval.fpgr"
    formats.write_grid(path, IndicatorGrid(dom, cells))
    return path


def test_rasterize_disc(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "r.yaml", {
        "shape": {"type": "ball", "center": [0, 0], "radius": 1.0},
        "cell_size": 0.05, "output": str(tmp_path / "disc.fpgr")})
    code, out, _ = run(capsys, "rasterize", "--config", cfg)
    assert code == 0
    assert out["volume"] == pytest.approx(math.pi, rel=0.01)
    assert out["config"]["cell_size"] == 0.05 and out["version"]
    assert formats.read_grid(tmp_path / "disc.fpgr").count == out["cells"]


def test_rasterize_flags_override_file(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "r.yaml", {
        "shape": {"type": "box", "low": [0], "high": [1]}, "cell_size": 0.5,
        "output": str(tmp_path / "a.fpgr")})
    code, out, _ = run(capsys, "rasterize", "--config", cfg, "--cell-size", 0.25)
    assert code == 0 and out["cells"] == 4 and out["volume"] == 1.0


def test_rasterize_unknown_key(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "r.yaml", {"shape": {"type": "ball", "center": [0], "radius": 1},
                                           "cell_size": 0.1, "output": "x", "colour": "red"})
    code, _, err = run(capsys, "rasterize", "--config", cfg)
    assert code == 2 and "colour" in err


def test_rasterize_unwritable(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "r.yaml", {
        "shape": {"type": "ball", "center": [0], "radius": 1}, "cell_size": 0.1,
        "output": str(tmp_path / "missing" / "dir" / "x.fpgr")})
    code, _, err = run(capsys, "rasterize", "--config", cfg)
    assert code == 3 and "I/O" in err


def test_invalid_yaml(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("shape: [unclosed\n")
    assert run(capsys, "rasterize", "--config", bad)[0] == 2
    lst = tmp_path / "list.yaml"
    lst.write_text("- 1\n- 2\n")
    assert run(capsys, "rasterize", "--config", lst)[0] == 2


def test_energy_interval(interval, capsys):
    code, out, _ = run(capsys, "energy", interval, "--sigma", 0.5, "--window", "R=inf")
    assert code == 0
    assert out["value"] == pytest.approx(8.0, rel=0.01)
    assert out["config"]["renorm"] == "none" and out["config"]["engine"] == "direct"
    code, conv, _ = run(capsys, "energy", interval, "--sigma", 0.5, "--window", "R=inf",
                        "--engine", "conv")
    assert conv["value"] == pytest.approx(out["value"], rel=1e-9)


def test_energy_config_file(interval, tmp_path, capsys):
    cfg = write_yaml(tmp_path / "e.yaml", {"grid": str(interval), "sigma": 0, "window": "R=inf",
                                           "renorm": "analytic", "cache": False})
    code, out, _ = run(capsys, "energy", "--config", cfg)
    assert code == 0 and out["value"] == pytest.approx(2.0, rel=0.01)
    assert out["window"] == "inf" and out["renorm_mode"] == "analytic"


@pytest.mark.parametrize("args", [("--sigma", 0, "--window", "R=inf", "--renorm", "none"),
                                  ("--sigma", 0.5, "--window", "r=0")])
def test_energy_divergent(interval, capsys, args):
    code, out, err = run(capsys, "energy", interval, *args)
    assert code == 4 and out is None and "diverg" in err


@pytest.mark.parametrize("window", ["R", "q=1", "R=abc", "r=inf"])
def test_energy_bad_window(interval, capsys, window):
    assert run(capsys, "energy", interval, "--sigma", 0.5, "--window", window)[0] == 2


def test_energy_missing_and_corrupt_grid(tmp_path, capsys):
    assert run(capsys, "energy", tmp_path / "none.fpgr", "--sigma", 0.5, "--window", "R=1")[0] == 3
    junk = tmp_path / "junk.fpgr"
    junk.write_bytes(b"not a grid at all")
    assert run(capsys, "energy", junk, "--sigma", 0.5, "--window", "R=1")[0] == 3


def test_sweep_constant_tail(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "s.yaml", {
        "kind": "R", "shape": {"type": "ball", "center": [0, 0], "radius": 0.4},
        "resolutions": [0.1], "sigma_grid": [-0.5, 0.5], "R_grid": [1, 2, 4]})
    out_prefix = tmp_path / "sweep"
    code, out, _ = run(capsys, "sweep", "--config", cfg, "--output", out_prefix)
    assert code == 0 and out["passed"]
    for s in (-0.5, 0.5):
        vals = [p["value"] for p in out["points"] if p["sigma"] == s]
        assert vals[0] == vals[1] == vals[2]
    assert (tmp_path / "sweep.json").exists() and (tmp_path / "sweep.csv").exists()


def test_sweep_unknown_key(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "s.yaml", {"kind": "R", "shape": {"type": "box", "low": [0],
                                                                  "high": [1]}, "Rgrid": [1]})
    code, _, err = run(capsys, "sweep", "--config", cfg)
    assert code == 2 and "Rgrid" in err


def test_sweep_failed_verdict_exit(tmp_path, capsys):
    # an analytic r sweep through r = h is inconsistent for sigma > 0 and must report it
    cfg = write_yaml(tmp_path / "s.yaml", {
        "kind": "r", "shape": {"type": "box", "low": [0], "high": [1]},
        "resolutions": [1 / 64], "sigma_grid": [0.5], "r_grid": [0.5, 0.25], "renorm": "analytic"})
    code, out, _ = run(capsys, "sweep", "--config", cfg)
    assert code == 5 and not out["passed"]


def test_iso_equal_shapes(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "i.yaml", {"cell_size": 0.1, "competitors": ["ball"]})
    code, out, _ = run(capsys, "iso", "--config", cfg)
    assert code == 0
    assert all(p["margin"] == 0 for p in out["points"] if p["competitor"] == "ball")


def test_suite_and_fault(tmp_path, capsys):
    code, out, _ = run(capsys, "suite", "--seed", 42, "--dim", 1, "--trials", 3)
    assert code == 0 and out["passed"] and out["config"]["seed"] == 42
    code, out, _ = run(capsys, "suite", "--trials", 2, "--fault", "perturb_table")
    assert code == 5


def test_suite_zero_trials(capsys):
    code, out, _ = run(capsys, "suite", "--trials", 0)
    assert code == 0 and out["verdicts"] == []


def test_rearrange_and_tv(tmp_path, capsys):
    dom = GridDomain(2, (16, 16), 1 / 8, (0, 0))
    eta = random_density(dom, np.random.default_rng(0), levels=3)
    src = tmp_path / "eta.fpgr"
    formats.write_grid(src, eta)
    code, out, _ = run(capsys, "rearrange", src, "--output", tmp_path / "star.fpgr")
    assert code == 0 and out["mass"] == pytest.approx(eta.mass(), rel=1e-15)
    star = formats.read_grid(tmp_path / "star.fpgr")
    assert isinstance(star, DensityGrid)
    assert np.array_equal(np.sort(star.cells.ravel()), np.sort(eta.cells.ravel()))
    code, out, _ = run(capsys, "tv", src, "--sigma", 0.5, "--R", 1.0)
    assert code == 0 and out["tv"] > 0


def test_bad_arguments_exit_2(capsys):
    assert main(["energy", "--engine", "gpu"]) == 2
    assert main(["nosuchcommand"]) == 2


def test_json_mode_silences_warnings(tmp_path, capsys):
    dom = GridDomain(1, (200,), 1 / 16, (0.0,))
    cells = np.zeros(200, bool)
    cells[4:20] = True
    cells[180:196] = True
    g = tmp_path / "two.fpgr"
    formats.write_grid(g, IndicatorGrid(dom, cells))
    code, out, err = run(capsys, "energy", g, "--sigma", -0.5, "--window", "r=0.5", "--json")
    assert code == 0 and err == ""


def test_outputs_are_byte_identical(tmp_path, capsys):
    for tag, threads in (("a", 1), ("b", 1), ("c", 4)):
        assert main(["suite", "--trials", "2", "--dim", "1,2", "--threads", str(threads),
                     "--output", str(tmp_path / tag)]) == 0
    capsys.readouterr()
    a = (tmp_path / "a.json").read_bytes()
    assert a == (tmp_path / "b.json").read_bytes() == (tmp_path / "c.json").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "c.csv").read_bytes()


@pytest.mark.skipif(shutil.which("fracperim") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["fracperim", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "fracperim" in res.stdout


def test_module_entry(interval):
    res = subprocess.run([sys.executable, "-m", "fracperim.cli", "energy", str(interval),
                          "--sigma", "0.5", "--window", "R=0.5", "--json"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["window_kind"] == "R"
