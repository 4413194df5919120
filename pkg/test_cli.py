"""End-to-end runs of the command-line front end on tiny scenes."""

import json

import numpy as np
import pandas as pd
import pytest

from displaced_radar.config import load_run_config
from displaced_radar.main import main

TINY_RADARS = [
    {"origin": origin, "fs_hz": 3.2e6, "n_chirps": 2}
    for origin in ([0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 2.5, 0.0])
]


def _write_config(tmp_path, *, ego_velocity=(1.0, 15.0, 0.0), **sections):
    document = {
        "scene": {
            "radars": TINY_RADARS,
            "targets": [{"position": [0.0, 20.0, 0.0]}],
            "ego_velocity": list(ego_velocity),
            "sync_offsets_s": [0.0, 1e-5, 5e-6],
        },
        "grid": {"x_range": [-2.0, 2.0], "y_range": [18.0, 22.0], "spacing_m": 0.5},
        **sections,
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(document))
    return path


@pytest.fixture(autouse=True)
def isolated_environment(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for name in ("RADAR_THREADS", "RADAR_SEED", "RADAR_OUTPUT_DIR", "RADAR_LOG_FILE", "RADAR_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)


def test_usage_errors_exit_with_one(tmp_path):
    assert main([]) == 1
    assert main(["ptrf", "--mode", "fused"]) == 1
    assert main(["nmse", "--scheme", "fast-cp"]) == 1


def test_missing_target_is_a_configuration_error(tmp_path):
    assert main(["ptrf", "--out", str(tmp_path / "out")]) == 1
    assert main(["ptrf", "--config", str(tmp_path / "missing.json")]) == 1


def test_ptrf_writes_grids_cuts_and_manifest(tmp_path):
    config = _write_config(tmp_path, ptrf={"modes": ["single", "coherent"], "half_span_m": 1.0, "step_m": 0.05})
    out = tmp_path / "ptrf"
    assert main(["ptrf", "--config", str(config), "--out", str(out), "--seed", "7", "--log-level", "warning"]) == 0

    for mode in ("single", "coherent"):
        grid = pd.read_csv(out / f"ptrf_{mode}.csv", index_col=0)
        assert grid.shape == (9, 9)
        assert grid.to_numpy().max() == pytest.approx(1.0)
        assert (out / f"ptrf_{mode}.pgm").exists()
        cut = pd.read_csv(out / f"range_cut_{mode}.csv")
        assert cut["response"].iloc[len(cut) // 2] == pytest.approx(1.0)
        assert (out / f"cross_range_cut_{mode}_db.csv").exists()
    widths = pd.read_csv(out / "widths.csv")
    assert widths["mode"].tolist() == ["single", "coherent"]
    assert widths["range_width_m"].iloc[0] == pytest.approx(0.3, rel=0.2)
    assert not (out / "ptrf_noncoherent.csv").exists()

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["manifest"]["command"] == "ptrf"
    assert manifest["seed"] == 7
    assert "widths.csv" in manifest["manifest"]["outputs"]
    reloaded = load_run_config(out / "manifest.json")
    assert reloaded.ptrf.modes == ["single", "coherent"]


def test_mode_flag_overrides_config(tmp_path):
    config = _write_config(tmp_path, ptrf={"half_span_m": 1.0, "step_m": 0.1})
    out = tmp_path / "only_single"
    assert main(["ptrf", "--config", str(config), "--out", str(out), "--mode", "single"]) == 0
    assert (out / "ptrf_single.csv").exists()
    assert not (out / "ptrf_coherent.csv").exists()


def test_thread_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("RADAR_THREADS", "3")
    config = _write_config(tmp_path, ptrf={"modes": ["single"], "half_span_m": 0.5, "step_m": 0.1})
    out = tmp_path / "env"
    assert main(["ptrf", "--config", str(config), "--out", str(out)]) == 0
    assert json.loads((out / "manifest.json").read_text())["threads"] == 3
    out = tmp_path / "flag"
    assert main(["ptrf", "--config", str(config), "--out", str(out), "--threads", "2"]) == 0
    assert json.loads((out / "manifest.json").read_text())["threads"] == 2


def test_sync_recovers_injected_offsets(tmp_path):
    config = _write_config(tmp_path)
    out = tmp_path / "sync"
    assert main(["sync", "--config", str(config), "--out", str(out), "--save-cube"]) == 0
    frame = pd.read_csv(out / "sync.csv")
    np.testing.assert_allclose(frame["offset_s"], [0.0, 1e-5, 5e-6], rtol=1e-8, atol=1e-15)
    assert np.all(np.abs(frame["error_s"]) < 1e-12)
    assert (out / "sync_report.txt").exists()
    assert (out / "sync_image.csv").exists()
    assert (out / "cube.bin").exists() and (out / "cube.hdr").exists()


def test_static_platform_sync_is_a_runtime_error(tmp_path):
    config = _write_config(tmp_path, ego_velocity=(0.0, 0.0, 0.0))
    assert main(["sync", "--config", str(config), "--out", str(tmp_path / "static")]) == 2


def test_bounds_writes_one_contour_per_panel(tmp_path):
    document = {
        "scene": {"preset": "bounds"},
        "bounds": {
            "panels": ["pcf_crlb_q3", "pcf_crlb_q1"],
            "x_range": [-10.0, 10.0],
            "y_range": [20.0, 60.0],
            "n_points": 3,
            "n_mc": 2,
        },
    }
    config = tmp_path / "bounds.json"
    config.write_text(json.dumps(document))
    out = tmp_path / "bounds"
    assert main(["bounds", "--config", str(config), "--out", str(out)]) == 0

    fused = pd.read_csv(out / "bound_pcf_crlb_q3.csv", index_col=0).to_numpy()
    single = pd.read_csv(out / "bound_pcf_crlb_q1.csv", index_col=0).to_numpy()
    assert fused.shape == single.shape == (3, 3)
    assert np.all(np.isfinite(fused)) and np.all(fused > 0)
    assert np.all(fused <= single * (1 + 1e-9))
    assert not (out / "bound_ncp_crlb_q3.csv").exists()


def test_nmse_writes_tables(tmp_path):
    config = _write_config(
        tmp_path,
        experiment={"schemes": ["bomp-ncp"], "snr_db": ["inf"], "n_trials": 2},
    )
    out = tmp_path / "nmse"
    assert main(["nmse", "--config", str(config), "--out", str(out)]) == 0
    table = pd.read_csv(out / "nmse_table.csv")
    assert table["scheme"].tolist() == ["bomp-ncp"]
    assert table["n_failed"].iloc[0] == 0
    assert table["nmse_target"].iloc[0] < 1e-6
    assert len(pd.read_csv(out / "nmse_trials.csv")) == 2
    assert json.loads((out / "manifest.json").read_text())["experiment"]["n_trials"] == 2
