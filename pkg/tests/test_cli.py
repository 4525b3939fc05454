import csv
import json
import os

import numpy as np
import pytest

from mfje.cli import main, par_map, resolve_seed, write_csv
from mfje.errors import ConfigError
from mfje.presets import build_kernel


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


SIM_CFG = """
[experiment]
preset = "constant-rate"

[model]
rate = 0.5

[mc]
n = 2
replications = 20
seed = 11
"""

CHAOS_CFG = """
[experiment]
preset = "sird"

[mc]
n_list = [10, 20, 40]
replications = 4
seed = 1
"""


# ---------------------------------------------------------------------------
# config plumbing


def test_build_kernel_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        build_kernel("nope", {})


def test_resolve_seed_precedence(monkeypatch):
    config = {"mc": {"seed": 5}}
    monkeypatch.delenv("MFJE_SEED", raising=False)
    assert resolve_seed(config, None) == 5
    monkeypatch.setenv("MFJE_SEED", "7")
    assert resolve_seed(config, None) == 7
    assert resolve_seed(config, 9) == 9
    monkeypatch.setenv("MFJE_SEED", "zzz")
    with pytest.raises(ConfigError):
        resolve_seed(config, None)


def test_par_map_order_and_worker_independence():
    items = list(range(17))
    seq = par_map(_square, items, workers=1)
    par = par_map(_square, items, workers=4)
    assert seq == par == [i * i for i in items]


def _square(x):
    return x * x


# ---------------------------------------------------------------------------
# exit codes


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "none.toml"),
                 "--out", str(tmp_path / "o"), "--quiet"]) == 2
    assert "config error" in capsys.readouterr().err


def test_bad_toml_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.toml", "not toml [")
    assert main(["simulate", "--config", cfg,
                 "--out", str(tmp_path / "o"), "--quiet"]) == 2


def test_invalid_theta_ordering_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, "claims.toml", """
[experiment]
preset = "gamma-claims"

[model]
theta_min = 2.0
theta_max = 1.0
""")
    assert main(["claims-gamma", "--config", cfg,
                 "--out", str(tmp_path / "o"), "--quiet"]) == 2
    err = capsys.readouterr().err
    assert "theta_min" in err and "theta_max" in err


# ---------------------------------------------------------------------------
# artifacts


def test_simulate_writes_paths_and_manifest(tmp_path):
    cfg = _write(tmp_path, "sim.toml", SIM_CFG)
    out = str(tmp_path / "out")
    assert main(["simulate", "--config", cfg, "--out", out, "--quiet"]) == 0
    with open(os.path.join(out, "paths.csv")) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["replication", "individual", "event_time", "state"]
    assert len(rows) > 1
    with open(os.path.join(out, "manifest.json")) as f:
        manifest = json.load(f)
    assert manifest["experiment"] == "simulate"
    assert manifest["seed"] == 11
    assert manifest["outputs"] == ["paths.csv"]
    assert len(manifest["config_sha256"]) == 64


def test_csv_uses_full_precision_and_lf(tmp_path):
    name = write_csv(str(tmp_path), "x.csv", ["v"], [(1 / 3,)])
    raw = (tmp_path / name).read_bytes()
    assert b"\r" not in raw
    assert b"0.33333333333333331" in raw


def test_chaos_csv_shape_and_positive_gaps(tmp_path):
    cfg = _write(tmp_path, "chaos.toml", CHAOS_CFG)
    out = str(tmp_path / "out")
    assert main(["converge", "--config", cfg, "--out", out, "--quiet"]) == 0
    data = np.genfromtxt(os.path.join(out, "chaos.csv"), delimiter=",",
                         names=True)
    assert data.shape == (3,)
    assert np.all(data["mean_gap"] > 0)
    with open(os.path.join(out, "summary.json")) as f:
        summary = json.load(f)
    assert "loglog_slope" in summary


def test_zero_payment_reserves_are_zero(tmp_path):
    cfg = _write(tmp_path, "res.toml", """
[experiment]
preset = "sird"
""")
    out = str(tmp_path / "out")
    assert main(["reserve-sird", "--config", cfg, "--out", out,
                 "--quiet"]) == 0
    with open(os.path.join(out, "reserves.csv")) as f:
        rows = list(csv.reader(f))[1:]
    assert all(float(v) == 0.0 for _, v in rows)


def test_seed_flag_overrides_config(tmp_path):
    cfg = _write(tmp_path, "sim.toml", SIM_CFG)
    out_a = str(tmp_path / "a")
    out_b = str(tmp_path / "b")
    out_c = str(tmp_path / "c")
    main(["simulate", "--config", cfg, "--out", out_a, "--quiet"])
    main(["simulate", "--config", cfg, "--out", out_b, "--quiet",
          "--seed", "99"])
    main(["simulate", "--config", cfg, "--out", out_c, "--quiet",
          "--seed", "99"])

    def read(d):
        with open(os.path.join(d, "paths.csv")) as f:
            return f.read()

    assert read(out_a) != read(out_b)
    assert read(out_b) == read(out_c)


def test_audit_reports_ok_for_presets(tmp_path):
    for preset in ("constant-rate", "sird", "gamma-claims"):
        cfg = _write(tmp_path, f"{preset}.toml", f"""
[experiment]
preset = "{preset}"
""")
        out = str(tmp_path / f"out-{preset}")
        assert main(["audit", "--config", cfg, "--out", out, "--quiet"]) == 0
        with open(os.path.join(out, "audit.json")) as f:
            report = json.load(f)
        assert report["ok"], preset
