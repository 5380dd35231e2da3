import json
import shutil
from importlib.resources import files
from pathlib import Path

import numpy as np
import pytest

from satiqc.cli import main
from satiqc.config import load_config, ConfigError


CONFIG_DIR = files("satiqc") / "configs"


@pytest.fixture()
def so_config(tmp_path):
    dst = tmp_path / "second_order.json"
    shutil.copy(str(CONFIG_DIR / "second_order.json"), dst)
    return dst


@pytest.fixture()
def cart_config(tmp_path):
    dst = tmp_path / "cart_pendulum.json"
    shutil.copy(str(CONFIG_DIR / "cart_pendulum.json"), dst)
    return dst


def test_load_shipped_configs():
    for name in ("second_order.json", "cart_pendulum.json",
                 "cart_pendulum_antiwindup.json"):
        cfg = load_config(str(CONFIG_DIR / name))
        assert cfg.plant.nx in (2, 4)


def test_schema_rejects_bad_dimension(tmp_path, so_config):
    raw = json.loads(so_config.read_text())
    raw["plant"]["B0"] = [[0.0]]          # wrong row count
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(raw))
    with pytest.raises(ConfigError, match="B0"):
        load_config(bad)


def test_schema_rejects_bad_field(tmp_path, so_config):
    raw = json.loads(so_config.read_text())
    raw["alpha"] = -1.0
    bad = tmp_path / "bad2.json"
    bad.write_text(json.dumps(raw))
    with pytest.raises(ConfigError, match="alpha"):
        load_config(bad)


def test_cli_invalid_config_exit_code(tmp_path):
    bad = tmp_path / "nonsense.json"
    bad.write_text("{\"plant\": {}}")
    rc = main(["synth", "--config", str(bad)])
    assert rc == 2


def test_cli_factorize_popov(so_config, capsys):
    rc = main(["factorize", "--config", str(so_config), "--multiplier", "popov"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "frequency-identity residual" in out


def test_cli_factorize_sector_static(so_config, capsys):
    rc = main(["factorize", "--config", str(so_config), "--multiplier", "sector"])
    out = capsys.readouterr().out
    assert rc == 0
    resid = float(out.split("frequency-identity residual:")[1].strip())
    assert resid < 1e-12


def test_cli_factorize_bad_zf(tmp_path, so_config):
    raw = json.loads(so_config.read_text())
    for e in raw["iqcs"]:
        if e["kind"] == "zames_falb":
            e["h"] = {"num": [3.0], "den": [1.0, 1.0]}   # L1 norm 3
    bad = tmp_path / "zf.json"
    bad.write_text(json.dumps(raw))
    rc = main(["factorize", "--config", str(bad), "--multiplier", "zames_falb"])
    assert rc == 2


def test_cli_synth_analyze_simulate_roundtrip(so_config, tmp_path, capsys):
    result = tmp_path / "result.json"
    rc = main(["synth", "--config", str(so_config), "--out", str(result)])
    assert rc == 0
    payload = json.loads(result.read_text())
    gamma = payload["result"]["gamma"]
    assert 1.43 <= gamma <= 1.59
    assert "metadata" in payload and "timestamp" in payload["metadata"]
    # determinism: rerun and compare everything except metadata
    result2 = tmp_path / "result2.json"
    rc = main(["synth", "--config", str(so_config), "--out", str(result2)])
    assert rc == 0
    p1 = json.loads(result.read_text())
    p2 = json.loads(result2.read_text())
    p1.pop("metadata"), p2.pop("metadata")
    assert json.dumps(p1, sort_keys=True) == json.dumps(p2, sort_keys=True)

    rc = main(["analyze", "--config", str(so_config), "--result", str(result)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "analysis-certified gamma" in out

    trace = tmp_path / "trace.csv"
    rc = main(["simulate", "--config", str(so_config), "--result", str(result),
               "--scenario", "paper", "--out", str(trace)])
    assert rc == 0
    summary = json.loads(trace.with_suffix(".summary.json").read_text())
    assert summary["empirical_l2_gain"] <= gamma
    assert all(re < -1.0 + 1e-6 for re, _ in summary["closed_loop_poles"])
    header = trace.read_text().splitlines()[0]
    assert header.startswith("time,")


def test_cli_sweep_small(so_config, tmp_path):
    raw = json.loads(so_config.read_text())
    raw["sweep"] = {"alphas": [2.0], "strategies": ["zames_falb", "mixed"]}
    cfgp = tmp_path / "sweep.json"
    cfgp.write_text(json.dumps(raw))
    out = tmp_path / "sweep.csv"
    rc = main(["sweep", "--config", str(cfgp), "--out", str(out)])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "alpha,gamma_ZF,gamma_M"
    vals = [float(v) for v in lines[1].split(",")]
    assert vals[0] == 2.0
    assert 1.4 < vals[2] <= vals[1] + 1e-3 < 1.7


def test_cli_antiwindup_synth(tmp_path, capsys):
    src = CONFIG_DIR / "cart_pendulum_antiwindup.json"
    dst = tmp_path / "aw.json"
    shutil.copy(str(src), dst)
    result = tmp_path / "aw.result.json"
    rc = main(["synth", "--config", str(dst), "--out", str(result)])
    assert rc == 0
    payload = json.loads(result.read_text())
    assert abs(payload["result"]["gamma"] - 181.14) < 18.0


def test_cli_sweep_parallel_jobs(so_config, tmp_path):
    raw = json.loads(so_config.read_text())
    raw["sweep"] = {"alphas": [2.0, 5.0], "strategies": ["mixed"]}
    cfgp = tmp_path / "sweepj.json"
    cfgp.write_text(json.dumps(raw))
    out = tmp_path / "sweepj.csv"
    rc = main(["sweep", "--config", str(cfgp), "--out", str(out), "--jobs", "2"])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 3
    for ln in lines[1:]:
        g = float(ln.split(",")[1])
        assert 1.4 < g < 1.6


def test_cli_analyze_infeasible_gains_exit_code(so_config, tmp_path):
    cfg = load_config(so_config)
    from satiqc.config import build_closed_loop
    cl = build_closed_loop(cfg)
    Fc = np.zeros((1, cl.n_cl))
    Fc[0, 2] = 10.0       # destabilizing
    result = tmp_path / "bad_gains.json"
    result.write_text(json.dumps({"result": {
        "gamma": 1.0, "Fc": Fc.tolist(), "Hc": [[0.0]]}}))
    rc = main(["analyze", "--config", str(so_config), "--result", str(result)])
    assert rc == 1


def test_factor_serialization_roundtrip():
    from satiqc.multipliers import make_popov_multiplier
    from satiqc.factorization import j_spectral_factorize, to_triangular
    fac = j_spectral_factorize(make_popov_multiplier(1.0, 0.01))
    d = fac.to_dict()
    json.dumps(d)      # JSON-serializable
    assert d["kind"] == "popov" and d["m1"] == 1
    t = to_triangular(fac).to_dict()
    json.dumps(t)
    assert t["scale"] == 1.0
