import gzip
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eeqt import presets
from eeqt.cli import build_parser, config_from_args, main
from eeqt.config import ExperimentConfig, from_preset, load_config, parse_floats
from eeqt.errors import ConfigurationError
from eeqt.io import read_columns, to_jsonable, write_columns, write_json
from eeqt.relkin import StateKind


def _ini(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


# --- presets --------------------------------------------------------------------------

@pytest.mark.parametrize("name, family, p0, tau_cut", [
    ("fig1-p0=1.0", "arrival", 1.0, 4.5),
    ("fig2-p0=0.5", "arrival", 0.5, 7.0),
    ("fig1-p0=0.25", "arrival", 0.25, 13.0),
    ("fig3-p0=0.75", "traversal", 0.75, 13.5),
    ("fig4-p0=2", "traversal", 2.0, 10.5),
    ("fig5a-dx1=0.3", "traversal", 0.75, 13.5),
])
def test_preset_resolution(name, family, p0, tau_cut):
    p = presets.resolve_preset(name)
    assert p.family == family
    assert p.initial.p0 == p0
    assert p.grid.tau_cut == tau_cut
    assert p.initial.kind is StateKind.POSITIVE


def test_preset_detector_overrides():
    assert presets.resolve_preset("fig5a-dx1=0.3").detectors[0].width == 0.3
    assert presets.resolve_preset("fig5b-W1=0.01").detectors[0].height == 0.01
    d2 = presets.resolve_preset("fig5c-dx2=0.5-W2=1.0").detectors[1]
    assert (d2.width, d2.height, d2.destructive) == (0.5, 1.0, True)
    d = presets.resolve_preset("arrival-dxD=0.4-WD=1e-5").detectors[0]
    assert (d.width, d.height) == (0.4, 1e-5)


def test_preset_steps():
    p = presets.resolve_preset("fig3-p0=1.0")
    assert (p.grid.x_min, p.grid.x_max, p.grid.dx) == (-8.0, 8.0, 0.0006)
    assert p.steps == (0.0006, 0.001)
    c = presets.resolve_preset("fig1-p0=1.0", coarse=True)
    assert c.grid.dx == c.grid.dtau == 0.002
    assert c.steps == (0.002, 0.003)


@pytest.mark.parametrize("name", ["fig9-p0=1", "fig1-p0=abc", "fig1-p0=-1", "fig5a-dx1=0"])
def test_bad_preset(name):
    with pytest.raises(ConfigurationError):
        presets.resolve_preset(name)


def test_catalog_resolves():
    for name in presets.catalog():
        presets.resolve_preset(name, coarse=True)


# --- config files -------------------------------------------------------------------------

def test_config_from_preset_with_overrides(tmp_path):
    cfg = load_config(_ini(tmp_path, """
[experiment]
preset = fig1-p0=1.0
coarse = yes
boost = 0.3, -0.6
seed = 4
[initial]
state = N
[detector]
height = 1e-3   ; stronger
"""))
    assert cfg.experiment == "arrival"
    assert cfg.initial.kind is StateKind.NEGATIVE
    assert cfg.detectors[0].height == 1e-3
    assert cfg.detectors[0].width == 0.01
    assert cfg.boosts == (0.3, -0.6)
    assert cfg.grid.dx == 0.002
    assert cfg.seed == 4


def test_config_explicit(tmp_path):
    cfg = load_config(_ini(tmp_path, """
[experiment]
kind = traversal
[initial]
p0 = 1.5
x0 = -1.5
[detector1]
x = 0
width = 0.5
height = 1e-3
[detector2]
x = 1.26
width = 0.02
height = 1e-3
[grid]
dx = 0.002
dx_pair = 0.002, 0.003
"""))
    assert cfg.grid.tau_cut == 10.5
    assert cfg.grid.dtau == 0.002
    assert (cfg.grid.x_min, cfg.grid.x_max) == (-8.0, 8.0)
    assert cfg.steps == (0.002, 0.003)
    assert not cfg.detectors[0].destructive and cfg.detectors[1].destructive


@pytest.mark.parametrize("body, where", [
    ("[experiment]\npreset = fig1-p0=1.0\ncolour = red\n", "experiment.colour"),
    ("[experiment]\npreset = fig1-p0=1.0\n[bogus]\na = 1\n", "bogus"),
    ("[experiment]\npreset = fig1-p0=1.0\nboost = 0.5, 1.0\n", "experiment.boost"),
    ("[experiment]\npreset = fig1-p0=1.0\nstride = many\n", "experiment.stride"),
    ("[experiment]\nkind = arrival\n", "initial"),
    ("[experiment]\nkind = teleport\n", "experiment.kind"),
    ("[experiment]\npreset = fig1-p0=1.0\n[detector]\nwidth = -1\n", "detector"),
    ("[experiment]\npreset = fig1-p0=1.0\n[initial]\nx0 = 0.5\n", "detector.x"),
    ("[experiment]\npreset = fig1-p0=1.0\n[grid]\ndx_pair = 0.1\n", "grid.dx_pair"),
    ("[experiment]\npreset = fig3-p0=1.0\nboth_steps = true\n[grid]\ndx_pair = 0.003, 0.002\n",
     "grid.dx_pair"),
])
def test_config_errors_name_the_key(tmp_path, body, where):
    with pytest.raises(ConfigurationError, match=where.replace(".", r"\.")):
        load_config(_ini(tmp_path, body))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "nope.ini")


def test_parse_floats():
    assert parse_floats("0.3, -0.6;0.9", "x") == (0.3, -0.6, 0.9)
    with pytest.raises(ConfigurationError):
        parse_floats("0.3, fast", "x")


def test_validate_detector_count():
    cfg = from_preset("fig1-p0=1.0")
    cfg.experiment = "traversal"
    with pytest.raises(ConfigurationError):
        cfg.validate()


# --- io ------------------------------------------------------------------------------------

@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30))
def test_columns_roundtrip(vals):
    import tempfile
    with tempfile.TemporaryDirectory() as d:
        a = np.array(vals)
        path = write_columns(Path(d) / "c.csv", "test", [a, 2 * a], ["a", "b"])
        names, data = read_columns(path)
    assert names == ["a", "b"]
    assert np.allclose(data[:, 0], a, rtol=1e-11, atol=1e-300)


def test_jsonable(tmp_path):
    cfg = from_preset("fig1-p0=1.0")
    payload = {"cfg": cfg.initial, "arr": np.arange(3), "nan": float("nan"), "x": np.float64(2)}
    out = to_jsonable(payload)
    assert out["cfg"]["kind"] == "P"
    assert out["arr"] == [0, 1, 2]
    assert out["nan"] is None
    path = write_json(tmp_path / "s.json", payload)
    assert json.loads(path.read_text())["x"] == 2.0


# --- command line --------------------------------------------------------------------------

def test_parser_requires_source():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["arrival"])
    with pytest.raises(SystemExit):
        build_parser().parse_args(["arrival", "--preset", "a", "--config", "b"])


def test_args_override_preset(tmp_path):
    args = build_parser().parse_args(["traversal", "--preset", "fig3-p0=1.0", "--coarse",
                                      "--stride", "30", "--state", "PN", "--boost", "0.3",
                                      "--out", str(tmp_path)])
    cfg = config_from_args(args)
    assert cfg.stride == 30
    assert cfg.initial.kind is StateKind.MIXED
    assert cfg.boosts == (0.3,)
    assert cfg.grid.dx == 0.002
    assert cfg.out == tmp_path


def test_presets_command(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out.split()
    assert "fig1-p0=1.0" in out and "fig5c-dx2=0.5-W2=1.0" in out


@pytest.mark.parametrize("argv", [
    ["arrival", "--preset", "fig9-p0=1"],
    ["arrival", "--preset", "fig3-p0=1.0"],
    ["traversal", "--preset", "fig1-p0=1.0"],
    ["arrival", "--preset", "fig1-p0=1.0", "--boost", "1.2"],
    ["traversal", "--preset", "fig3-p0=1.0", "--stride", "0"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err.startswith("eeqt: error:")


def test_config_family_must_match(tmp_path):
    ini = _ini(tmp_path, "[experiment]\npreset = fig1-p0=1.0\n")
    assert main(["traversal", "--config", str(ini)]) == 2


def test_construction_error_exit_3(tmp_path):
    ini = _ini(tmp_path, "[experiment]\npreset = fig1-p0=1.0\ncoarse = true\n"
                         "[grid]\nx_min = -1.5\n")
    assert main(["arrival", "--config", str(ini), "--out", str(tmp_path)]) == 3


def test_no_detection_exit_5(tmp_path):
    ini = _ini(tmp_path, "[experiment]\npreset = fig1-p0=1.0\ncoarse = true\n"
                         "[detector]\nheight = 1e-13\n")
    assert main(["arrival", "--config", str(ini), "--out", str(tmp_path)]) == 5


@pytest.fixture(scope="module")
def arrival_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("arrival")
    code = main(["arrival", "--preset", "fig1-p0=1.0", "--coarse", "--both-steps",
                 "--boost", "0.3,-0.6", "--out", str(out)])
    return code, out


def test_arrival_cli(arrival_run, capsys):
    code, out = arrival_run
    assert code == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["t_aRM"] == pytest.approx(math.sqrt(2))
    assert s["rel_deviation"] < 0.05
    assert s["error_T_a0"] > 0
    assert s["T_a0_dx_A"] != s["T_a0"]
    assert s["resolved_config"]["steps"] == [0.002, 0.003]
    assert s["resolved_config"]["grid"]["tau_cut"] == 4.5
    for b in s["boosts"]:
        assert b["T_a_v"] == pytest.approx(b["T_a_v_closed_form"], abs=1e-9)
    for name in ("density_rest.csv", "density_proper.csv", "density_v=+0.300.csv",
                 "density_v=-0.600.csv"):
        assert (out / name).exists()
    names, data = read_columns(out / "density_rest.csv")
    assert names == ["t", "density"]


def test_mc_arrival_cli(tmp_path):
    ini = _ini(tmp_path, "[experiment]\npreset = fig1-p0=1.0\ncoarse = true\nevents = 2000\n"
                         "seed = 3\n[detector]\nwidth = 0.2\nheight = 1e-2\n")
    assert main(["mc-arrival", "--config", str(ini), "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["mc"]["events"] == 2000
    assert s["mc"]["ks_distance"] < 0.05
    lines = (tmp_path / "events.csv").read_text().splitlines()
    assert len(lines) == 2002


def test_mc_traversal_cli(tmp_path):
    ini = _ini(tmp_path, """
[experiment]
preset = fig3-p0=1.0
stride = 40
events = 2000
seed = 5
[detector2]
width = 0.1
[grid]
x_min = -6
x_max = 6
dx = 0.004
tau_cut = 9
""")
    assert main(["mc-traversal", "--config", str(ini), "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["mc"]["deviation_in_stderr"] < 3
    assert sum(s["mc"]["buckets"].values()) == s["mc"]["chains"]
    assert s["mc"]["buckets"]["traversal"] >= 2000
    with gzip.open(tmp_path / "joint.csv.gz", "rt") as fh:
        assert fh.readline().startswith("#")


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "eeqt", "presets"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "fig3-p0=1.0" in r.stdout
