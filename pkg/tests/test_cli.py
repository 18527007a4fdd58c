import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

from doqkd.cli import main
from doqkd.simulate import paper_default_config


@pytest.fixture(scope="module")
def cli_cfg(tmp_path_factory):
    d = tmp_path_factory.mktemp("cfg")
    cfg = paper_default_config()
    cfg.duration_s = 0.12
    cfg.baseline_duration_s = 0.12
    cfg.block_length = 4096
    p = d / "cfg.json"
    cfg.save(p)
    return str(p)


@pytest.fixture(scope="module")
def sim_dir(cli_cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--config", cli_cfg, "--out", str(out)]) == 0
    return out


def test_simulate_writes_streams(sim_dir):
    for name in ("t1", "f1", "t2", "f2"):
        assert (sim_dir / f"{name}.ttag").exists()
        assert (sim_dir / f"{name}.ttag.truth").exists()
    assert (sim_dir / "session.json").exists()


def test_analyze(sim_dir, tmp_path):
    rc = main(["analyze", "--in", str(sim_dir), "--out", str(tmp_path)])
    assert rc == 0
    summary = json.loads((tmp_path / "analysis.json").read_text())
    assert summary["tt"]["fwhm_ps"] == pytest.approx(150.0, rel=0.25)
    csv = (tmp_path / "histograms.csv").read_text().splitlines()
    assert csv[0].startswith("#")
    assert any(line.startswith("ff,") for line in csv)


def test_sift_and_exit_codes(sim_dir, tmp_path):
    rc = main(["sift", "--in", str(sim_dir), "--format", "4,3,160",
               "--out", str(tmp_path)])
    assert rc == 0
    stats = json.loads((tmp_path / "sift.json").read_text())
    assert stats["kept_frames"] > 0
    assert (tmp_path / "key_a.bin").exists()
    assert (tmp_path / "transcript.bin").exists()
    # format mismatch -> protocol abort exit code
    rc = main(["sift", "--in", str(sim_dir), "--format", "4,3,160",
               "--format-b", "4,3,200", "--out", str(tmp_path)])
    assert rc == 3


def test_secure(cli_cfg, sim_dir, tmp_path_factory):
    cfg_path = Path(cli_cfg)
    base_dir = tmp_path_factory.mktemp("base")
    cfg = paper_default_config()
    cfg.duration_s = 0.12
    base = cfg.baseline_config()
    base.duration_s = 0.12
    bp = base_dir / "bcfg.json"
    base.save(bp)
    assert main(["simulate", "--config", str(bp), "--out", str(base_dir)]) == 0
    out = tmp_path_factory.mktemp("sec")
    rc = main(["secure", "--in", str(sim_dir), "--baseline", str(base_dir),
               "--config", cli_cfg, "--out", str(out)])
    assert rc == 0
    rep = json.loads((out / "security.json").read_text())
    assert {"xi_t", "xi_w", "chi_ae_bpc", "tfcm"} <= set(rep)


def test_keygen(cli_cfg, tmp_path):
    rc = main(["keygen", "--config", cli_cfg, "--out", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["secret_key_bits"] > 0
    key = (tmp_path / "secret_key.bin").read_bytes()
    assert len(key) == (rep["secret_key_bits"] + 7) // 8
    # key-material files and their sidecar
    side = json.loads((tmp_path / "key_material.json").read_text())
    n_bits = side["n_bits_per_symbol"]
    raw = (tmp_path / "raw_key_a.bin").read_bytes()
    assert len(raw) == (side["raw_symbols"] * n_bits + 7) // 8
    rec = (tmp_path / "reconciled_key.bin").read_bytes()
    assert len(rec) == (side["reconciled_bits"] + 7) // 8
    assert side["secret_bits"] == rep["secret_key_bits"]
    assert side["disclosed_bits"] > 0


def test_keygen_no_key_exit_code(tmp_path):
    cfg = paper_default_config()
    cfg.duration_s = 0.12
    cfg.baseline_duration_s = 0.12
    cfg.block_length = 4096
    # drown the receiver in injected noise: the balance goes negative
    cfg.channel = dataclasses.replace(cfg.channel, eve_time_sigma_ps=400.0,
                                      eve_freq_sigma_rad_s=2e11)
    p = tmp_path / "evil.json"
    cfg.save(p)
    rc = main(["keygen", "--config", str(p), "--out", str(tmp_path)])
    assert rc == 4


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert main(["keygen", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["keygen", "--config", str(tmp_path / "missing.json")]) == 2


def test_sweep_and_optimize(cli_cfg, tmp_path):
    rc = main(["sweep", "--config", cli_cfg, "--tau-list", "120,160",
               "--i-list", "3", "--n-list", "4", "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "sweep.csv").read_text().strip().splitlines()
    assert len(lines) == 3
    rc = main(["optimize", "--config", cli_cfg, "--tau-list", "120,160",
               "--i-list", "3", "--n-list", "4", "--qber-cap", "0.4",
               "--out", str(tmp_path)])
    assert rc == 0
    entries = json.loads((tmp_path / "optimize.json").read_text())
    assert entries[0]["n_bits"] == 4
