import csv
import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

from wvfield.cli import main
from wvfield.exceptions import ConfigError
from wvfield.export import atomic_write
from wvfield.numdiff import fit_order
from wvfield.scenarios import (SCHEMAS, ScenarioConfig, ScenarioFailure,
                               load_config, parse_config, resolve_output_dir,
                               run, serialize_config, sweep)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = """\
[scenario]
kind = weak_value
"""


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- parsing ----------------------------------------------------------------------

def test_minimal_config_gets_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.kind == "weak_value" and cfg.seed == 0 and cfg.output_dir == ""
    assert set(cfg.parameters) == set(SCHEMAS["weak_value"])
    assert cfg.parameters["observable"] == "z"


def test_parse_values_and_comments():
    cfg = parse_config("""\
# anomalous qubit, post rotated
[scenario]
kind = pointer_mc   # trailing comment
seed = 42

[parameters]
g = 2.5e-2
n_shots = 1000
post_1 = -0.5+0.25j
""")
    assert cfg.seed == 42
    assert cfg.parameters["g"] == 0.025
    assert cfg.parameters["n_shots"] == 1000
    assert cfg.parameters["post_1"] == complex(-0.5, 0.25)


@pytest.mark.parametrize("text,line,fragment", [
    ("[scenario]\nkind = weak_value\n[parameters]\nobservabel = z\n", 4, "observabel"),
    ("[scenario]\nkind = weak_valu\n", 2, "unknown scenario kind"),
    ("[scenario]\nkind = pointer_mc\n[parameters]\n\nn_shots = 1e5\n", 5, "n_shots"),
    ("[scenario]\nkind = pointer_mc\n[parameters]\ng = fast\n", 4, "'g' expects float"),
    ("[scenario]\nkind = weak_value\n[parameters]\npre_0 = 1+\n", 4, "pre_0"),
    ("[scenario]\nkind = weak_value\nseed = 1.5\n", 3, "seed"),
    ("[scenario]\nkind = weak_value\ncolor = red\n", 3, "color"),
    ("[scenario]\nkind = weak_value\n[extras]\n", 3, "unknown section"),
    ("kind = weak_value\n", 1, "outside any section"),
    ("[scenario]\nkind weak_value\n", 2, "key = value"),
    ("[scenario]\nkind = weak_value\n[parameters]\nobservable = z\nobservable = x\n", 5, "duplicate"),
])
def test_parse_errors_name_line(text, line, fragment):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)
    assert fragment in str(err.value)


def test_missing_kind():
    with pytest.raises(ConfigError, match="kind"):
        parse_config("[scenario]\nseed = 3\n")


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.cfg")), ids=lambda p: p.stem)
def test_cookbook_round_trip(path):
    text = path.read_text()
    cfg = parse_config(text)
    assert serialize_config(cfg) == text
    assert parse_config(serialize_config(cfg)) == cfg


def test_cookbook_covers_every_kind():
    assert {load_config(p).kind for p in CONFIG_DIR.glob("*.cfg")} == set(SCHEMAS)


def test_with_updates_coerces():
    cfg = parse_config(MINIMAL).with_updates(seed=5, observable="x")
    assert cfg.seed == 5 and cfg.parameters["observable"] == "x"
    with pytest.raises(ConfigError):
        cfg.with_updates(nonsense=1)
    with pytest.raises(ConfigError):
        parse_config("[scenario]\nkind = pointer_mc\n").with_updates(n_shots=1.5)


# --- running ------------------------------------------------------------------------

def test_weak_value_run(tmp_path):
    m = run(parse_config(MINIMAL), tmp_path)
    assert m.passed
    res = json.loads((tmp_path / "result.json").read_text())
    assert res["re"] == pytest.approx(2.4142135, abs=1e-7)
    assert res["im"] == pytest.approx(0.0, abs=1e-12)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["status"] == "pass" and man["finished"] and man["started"]
    assert set(man["outputs"]) == {"result.json"}
    assert parse_config(man["config_text"]) == parse_config(MINIMAL)


def test_eq6_csv_columns(tmp_path):
    m = run(load_config(CONFIG_DIR / "eq6_check.cfg"), tmp_path)
    assert m.passed
    rows = read_csv(tmp_path / "eq6.csv")
    assert list(rows[0]) == ["g", "ln_p", "analytic_slope", "fd_slope", "abs_err"]
    mid = rows[len(rows) // 2]
    assert float(mid["g"]) == 0 and float(mid["analytic_slope"]) == pytest.approx(2.0)


def test_run_is_byte_deterministic(tmp_path):
    cfg = load_config(CONFIG_DIR / "pointer_mc.cfg").with_updates(n_shots=20000)
    a = run(cfg, tmp_path / "a")
    b = run(cfg, tmp_path / "b")
    assert a.outputs == b.outputs
    c = run(cfg.with_updates(seed=1), tmp_path / "c")
    assert c.outputs != a.outputs


def test_manifest_reruns_exactly(tmp_path):
    cfg = load_config(CONFIG_DIR / "schwinger_check.cfg").with_updates(n_trials=3, seed=9)
    first = run(cfg, tmp_path / "first")
    man = json.loads((tmp_path / "first" / "manifest.json").read_text())
    again = run(parse_config(man["config_text"]), tmp_path / "again")
    assert again.outputs == first.outputs


def test_module_error_has_context(tmp_path):
    cfg = parse_config(MINIMAL).with_updates(pre_0=1, pre_1=0, post_0=0, post_1=1)
    m = run(cfg, tmp_path)
    assert m.status == "fail"
    bad = parse_config("[scenario]\nkind = pointer_mc\n").with_updates(
        pre_0=1, pre_1=0, post_0=0, post_1=1, g=0.0)
    with pytest.raises(ScenarioFailure, match="pointer_mc"):
        run(bad, tmp_path / "bad")
    man = json.loads((tmp_path / "bad" / "manifest.json").read_text())
    assert man["status"] == "error" and man["error"]


def test_output_dir_precedence(tmp_path, monkeypatch):
    cfg = parse_config(MINIMAL)
    monkeypatch.setenv("WVFIELD_OUT", str(tmp_path / "env"))
    assert resolve_output_dir(cfg) == tmp_path / "env" / "weak_value"
    cfg2 = cfg.with_updates(output_dir=str(tmp_path / "cfgdir"))
    assert resolve_output_dir(cfg2) == tmp_path / "cfgdir"
    assert resolve_output_dir(cfg2, tmp_path / "flag") == tmp_path / "flag"
    monkeypatch.delenv("WVFIELD_OUT")
    assert resolve_output_dir(cfg) == Path("wvfield_out") / "weak_value"


# --- atomic output -------------------------------------------------------------------

def test_atomic_write_leaves_no_partial_file(tmp_path):
    target = tmp_path / "out.csv"
    atomic_write(target, "old\n")
    with pytest.raises(TypeError):
        atomic_write(target, 123)
    assert target.read_text() == "old\n"
    assert [p.name for p in tmp_path.iterdir()] == ["out.csv"]


def test_atomic_write_interrupted_mid_write(tmp_path, monkeypatch):
    target = tmp_path / "table.csv"
    real_fsync = os.fsync

    def interrupted(fd):
        raise KeyboardInterrupt

    monkeypatch.setattr(os, "fsync", interrupted)
    with pytest.raises(KeyboardInterrupt):
        atomic_write(target, "a,b\n1,2\n")
    monkeypatch.setattr(os, "fsync", real_fsync)
    assert not target.exists()
    assert list(tmp_path.iterdir()) == []


# --- sweeps --------------------------------------------------------------------------

def test_sweep_empty_values(tmp_path):
    with pytest.raises(ConfigError):
        sweep(parse_config(MINIMAL), "observable", [], tmp_path)
    with pytest.raises(ConfigError):
        sweep(parse_config(MINIMAL), "nonsense", ["x"], tmp_path)


def test_sweep_g_halvings_supports_order_fit(tmp_path):
    cfg = load_config(CONFIG_DIR / "pointer_mc.cfg").with_updates(n_shots=20000)
    gs = [0.1, 0.05, 0.025, 0.0125]
    m = sweep(cfg, "g", gs, tmp_path)
    rows = read_csv(tmp_path / "sweep.csv")
    assert [float(r["g"]) for r in rows] == gs
    bias = [abs(float(r["re_exact"]) - float(r["re_weak"])) for r in rows]
    assert fit_order(gs, bias) >= 1.9
    assert len(m.runs) == 4 and len({r["seed"] for r in m.runs}) == 4
    assert all((tmp_path / f"run_{i:03d}" / "pointer_mc.csv").exists() for i in range(4))


def test_sweep_shots_stderr_scaling(tmp_path):
    cfg = load_config(CONFIG_DIR / "pointer_mc.cfg")
    sweep(cfg, "n_shots", [1000, 10000, 100000], tmp_path)
    se = [float(r["stderr_re"]) for r in read_csv(tmp_path / "sweep.csv")]
    ratios = np.array(se[:-1]) / np.array(se[1:])
    np.testing.assert_allclose(ratios, math.sqrt(10), rtol=0.2)


def test_sweep_complex_values_split(tmp_path):
    cfg = load_config(CONFIG_DIR / "weak_trajectory.cfg").with_updates(dt=0.01)
    sweep(cfg, "beta", ["1+0j", "0.5+0.5j"], tmp_path)
    rows = read_csv(tmp_path / "sweep.csv")
    assert "re_beta" in rows[0] and "im_beta" in rows[0]
    assert float(rows[1]["im_beta"]) == 0.5


# --- CLI ------------------------------------------------------------------------------

def write_cfg(path, text):
    path.write_text(text)
    return str(path)


def test_cli_exit_codes(tmp_path, capsys):
    ok = write_cfg(tmp_path / "ok.cfg", MINIMAL)
    assert main(["run", ok, "--out-dir", str(tmp_path / "o1")]) == 0
    assert "weak_value: pass" in capsys.readouterr().out

    fail = write_cfg(tmp_path / "fail.cfg",
                     "[scenario]\nkind = eq7_check\n[parameters]\ntolerance = 1e-30\n")
    assert main(["run", fail, "--out-dir", str(tmp_path / "o2")]) == 1

    bad = write_cfg(tmp_path / "bad.cfg", "[scenario]\nkind = nope\n")
    assert main(["run", bad]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.cfg")]) == 2


def test_cli_validate_and_list(tmp_path, capsys):
    assert main(["validate", str(CONFIG_DIR / "eq7_check.cfg")]) == 0
    assert "valid eq7_check" in capsys.readouterr().out
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    assert all(kind in out for kind in SCHEMAS)


def test_cli_seed_override_and_env(tmp_path, monkeypatch):
    monkeypatch.setenv("WVFIELD_OUT", str(tmp_path))
    cfg = write_cfg(tmp_path / "s.cfg", "[scenario]\nkind = schwinger_check\n[parameters]\nn_trials = 2\n")
    assert main(["run", cfg, "--seed", "17"]) == 0
    man = json.loads((tmp_path / "schwinger_check" / "manifest.json").read_text())
    assert man["seed"] == 17


def test_cli_sweep(tmp_path):
    cfg = write_cfg(tmp_path / "w.cfg", MINIMAL)
    assert main(["sweep", cfg, "--param", "observable", "--values", "x,z",
                 "--out-dir", str(tmp_path / "sw")]) == 0
    rows = read_csv(tmp_path / "sw" / "sweep.csv")
    assert [r["observable"] for r in rows] == ["x", "z"]
    assert main(["sweep", cfg, "--param", "observable", "--values", ",",
                 "--out-dir", str(tmp_path / "sw2")]) == 2
