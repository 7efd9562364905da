import csv
import hashlib
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from kit3wm import __version__
from kit3wm import amplifier
from kit3wm.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, main
from kit3wm.cme import CmeStepError
from kit3wm.config import ConfigError, load_config, parse_config

PRESETS = Path(__file__).resolve().parents[1] / "presets" / "reference"
GAIN = (PRESETS / "gain_profile.yaml").read_text()

SMALL_GAIN = GAIN.replace("points: 201", "points: 21").replace(
    "pumps_hz: [8.855e9, 8.8812e9, 8.8992e9, 8.9256e9, 8.9736e9]", "pumps_hz: [8.8812e9, 8.9736e9]"
)


def _write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _run(cmd, cfg, out, *extra):
    return main([cmd, "--config", str(cfg), "--out", str(out), *extra])


# --- configuration ------------------------------------------------------------

@pytest.mark.parametrize("edit, key", [
    (("series_inductance: 45.2e-12", "series_inductance: -45.2e-12"), "line.cell.series_inductance"),
    (("points: 201", "points: 0"), "sweep.signal_hz.points"),
    (("dc_bias", "dc_bais"), "drive.dc_bais"),
    (("unloaded_cells: 60", "unloaded_cells: 61"), "line.loading.unloaded_cells"),
    (("pump_hz: 8.8812e9", "pump_hz: fast"), "drive.pump_hz"),
])
def test_validation_reports_key_path(edit, key):
    with pytest.raises(ConfigError) as err:
        parse_config(GAIN.replace(*edit), "run.yaml")
    assert err.value.path == key
    assert str(err.value).startswith(key)


def test_unknown_section_and_bad_yaml():
    with pytest.raises(ConfigError) as err:
        parse_config(GAIN + "\nbogus: 1\n", "x")
    assert err.value.path == "bogus"
    with pytest.raises(ConfigError):
        parse_config(GAIN + "\n  : [\n", "x")
    with pytest.raises(ConfigError):
        parse_config("- 1\n- 2\n", "x")


def test_scientific_floats_parse_as_numbers():
    cfg = parse_config("drive: {dc_bias: 1.5e-3, scale_current: 7e-3, pump_amplitude: 1e-4, pump_hz: 8.8812e9}\n", "x")
    assert cfg.get("drive.pump_hz") == 8.8812e9
    assert isinstance(cfg.get("drive.scale_current"), float)


def test_digest_and_lookup(tmp_path):
    p = _write(tmp_path, GAIN)
    cfg = load_config(p)
    assert cfg.digest == hashlib.sha256(GAIN.encode()).hexdigest()
    assert cfg.get("sweep.signal_hz.points") == 201
    assert cfg.get("sweep.missing", 7) == 7
    with pytest.raises(ConfigError):
        cfg.require("chain")


def test_missing_config_file(tmp_path, capsys):
    assert _run("dispersion", tmp_path / "nope.yaml", tmp_path) == EXIT_CONFIG


def test_malformed_config_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, GAIN.replace("series_inductance: 45.2e-12", "series_inductance: -1.0"))
    assert _run("dispersion", cfg, tmp_path / "out") == EXIT_CONFIG
    assert "line.cell.series_inductance" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_empty_sweep_grid_rejected(tmp_path, capsys):
    cfg = _write(tmp_path, GAIN.replace("points: 201", "points: 0"))
    assert _run("gain-profile", cfg, tmp_path / "out") == EXIT_CONFIG


def test_command_needs_its_section(tmp_path, capsys):
    cfg = _write(tmp_path, GAIN)
    assert _run("noise-sim", cfg, tmp_path / "out") == EXIT_CONFIG
    assert "chain" in capsys.readouterr().err


# --- outputs ------------------------------------------------------------------

def _tree(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_gain_profile_outputs_and_header(tmp_path):
    cfg = _write(tmp_path, SMALL_GAIN)
    assert _run("gain-profile", cfg, tmp_path / "out") == EXIT_OK
    files = _tree(tmp_path / "out")
    assert set(files) == {"gain_profile.json", "gain_profile_8.881200e09.csv", "gain_profile_8.973600e09.csv"}
    text = files["gain_profile_8.881200e09.csv"].decode()
    assert "\r" not in text
    head, *rest = text.split("\n")
    digest = hashlib.sha256(SMALL_GAIN.encode()).hexdigest()
    assert head == f"# kit3wm {__version__} config_sha256={digest} command=gain-profile seed=0"
    rows = list(csv.reader(io.StringIO("\n".join(rest))))
    assert rows[0] == ["freq_hz", "gain_db"]
    assert len(rows) == 22
    meta = json.loads(files["gain_profile.json"])["meta"]
    assert meta["config_sha256"] == digest and meta["version"] == __version__


def test_outputs_independent_of_threads(tmp_path):
    cfg = _write(tmp_path, SMALL_GAIN)
    assert _run("gain-profile", cfg, tmp_path / "a", "--threads", "1") == EXIT_OK
    assert _run("gain-profile", cfg, tmp_path / "b", "--threads", "3") == EXIT_OK
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")


def test_noise_outputs_byte_identical_per_seed(tmp_path):
    cfg = PRESETS / "noise_sim.yaml"
    for d in ("a", "b"):
        assert _run("noise-sim", cfg, tmp_path / d, "--seed", "42") == EXIT_OK
    assert _run("noise-sim", cfg, tmp_path / "c", "--seed", "43") == EXIT_OK
    a, b, c = (_tree(tmp_path / d) for d in "abc")
    assert a == b
    assert a["sweep.csv"] != c["sweep.csv"]


def test_seed_flag_validation(tmp_path):
    with pytest.raises(SystemExit):
        main(["noise-sim", "--config", str(PRESETS / "noise_sim.yaml"), "--seed", str(2**64)])
    with pytest.raises(SystemExit):
        main(["noise-sim", "--config", str(PRESETS / "noise_sim.yaml"), "--threads", "0"])


def test_simulate_then_fit_round_trip(tmp_path):
    noiseless = (PRESETS / "noise_sim.yaml").read_text().replace("sigma: 0.05", "sigma: 0.0")
    cfg = _write(tmp_path, noiseless)
    out = tmp_path / "out"
    assert _run("noise-sim", cfg, out) == EXIT_OK
    assert _run("noise-fit", PRESETS / "noise_fit.yaml", tmp_path / "fit", "--input", str(out / "sweep.csv")) == EXIT_OK
    truth = json.loads((out / "noise_sim.json").read_text())
    fit = json.loads((tmp_path / "fit" / "fit.json").read_text())
    assert set(fit) == {"fit", "naive_fit", "comparison", "meta"}
    assert fit["fit"]["n_sigma"] == pytest.approx(truth["n_sigma_exact"], rel=1e-6)
    assert fit["fit"]["gain_ss"] == pytest.approx(truth["gain_ss"], rel=1e-6)
    assert fit["naive_fit"]["model"] == "single-input"


def test_fit_without_asymptotes_exits_3(tmp_path, capsys):
    narrow = (PRESETS / "noise_sim.yaml").read_text().replace("bias_current: 12.0e-6", "bias_current: 0.5e-6")
    cfg = _write(tmp_path, narrow)
    out = tmp_path / "out"
    assert _run("noise-sim", cfg, out) == EXIT_OK
    code = _run("noise-fit", PRESETS / "noise_fit.yaml", tmp_path / "fit", "--input", str(out / "sweep.csv"))
    assert code == EXIT_DATA
    assert "asymptote" in capsys.readouterr().err


def test_missing_sweep_file_exits_3(tmp_path, capsys):
    code = _run("noise-fit", PRESETS / "noise_fit.yaml", tmp_path, "--input", str(tmp_path / "none.csv"))
    assert code == EXIT_DATA


def test_too_many_failed_points_exits_4(tmp_path, monkeypatch, capsys):
    real = amplifier.signal_gain_db

    def flaky(drive, dispersion, signal, *args, **kwargs):
        if signal < 2 * math.pi * 3.5e9:
            raise CmeStepError(0.0, "forced failure")
        return real(drive, dispersion, signal, *args, **kwargs)

    monkeypatch.setattr(amplifier, "signal_gain_db", flaky)
    cfg = _write(tmp_path, SMALL_GAIN)
    assert _run("gain-profile", cfg, tmp_path / "out") == EXIT_NUMERIC
    body = (tmp_path / "out" / "gain_profile_8.881200e09.csv").read_text()
    assert "nan" in body
    summary = json.loads((tmp_path / "out" / "gain_profile.json").read_text())
    assert summary["profiles"][0]["failed_points"] == 5


def test_few_failed_points_are_tolerated(tmp_path, monkeypatch):
    real = amplifier.signal_gain_db

    def flaky(drive, dispersion, signal, *args, **kwargs):
        if signal < 2 * math.pi * 2.6e9:
            raise CmeStepError(0.0, "forced failure")
        return real(drive, dispersion, signal, *args, **kwargs)

    monkeypatch.setattr(amplifier, "signal_gain_db", flaky)
    cfg = _write(tmp_path, SMALL_GAIN)
    assert _run("gain-profile", cfg, tmp_path / "out") == EXIT_OK


def test_dispersion_presets(tmp_path):
    assert _run("dispersion", PRESETS / "dispersion.yaml", tmp_path / "l") == EXIT_OK
    assert _run("dispersion", PRESETS / "dispersion_unloaded.yaml", tmp_path / "u") == EXIT_OK
    loaded = json.loads((tmp_path / "l" / "dispersion.json").read_text())
    unloaded = json.loads((tmp_path / "u" / "dispersion.json").read_text())
    assert loaded["stopband_hz"][0] == pytest.approx(8.12e9, rel=0.01)
    assert unloaded["stopband_hz"] is None
    lines = (tmp_path / "l" / "dispersion.csv").read_text().splitlines()
    assert lines[0].startswith("# kit3wm")


def test_loss_budget_preset(tmp_path):
    assert _run("loss-budget", PRESETS / "loss_budget.yaml", tmp_path) == EXIT_OK
    doc = json.loads((tmp_path / "loss_budget.json").read_text())
    assert doc["budget"]["eta1_s"] == pytest.approx(0.57, abs=0.01)
    assert doc["budget"]["eta2"] == pytest.approx(0.64, abs=0.02)
    assert doc["kit_from_bypass_db"] == pytest.approx(1.4, abs=1e-9)
    assert doc["hemt_only"]["hemt_noise_recovered"] == pytest.approx(8.0, rel=1e-12)


def test_calibrate_pump_preset(tmp_path):
    assert _run("calibrate-pump", PRESETS / "calibrate_pump.yaml", tmp_path) == EXIT_OK
    doc = json.loads((tmp_path / "calibrate_pump.json").read_text())
    assert doc["pump_amplitude_a"] > 0


def test_phase_match_preset(tmp_path):
    assert _run("phase-match", PRESETS / "phase_match.yaml", tmp_path) == EXIT_OK
    doc = json.loads((tmp_path / "phase_match.json").read_text())
    assert len(doc["pumps"]) == 5
    assert [round(p["detuning_hz"]) for p in doc["pump_for_detuning"]] == [0, 1_000_000_000, 1_500_000_000, 2_000_000_000]


@pytest.mark.parametrize("name", ["gain_profile", "compression", "asymmetry"])
def test_sweep_presets_run(tmp_path, name):
    cmd = name.replace("_", "-")
    assert _run(cmd, PRESETS / f"{name}.yaml", tmp_path, "--threads", "4") == EXIT_OK
    assert all(p.stat().st_size > 0 for p in tmp_path.iterdir())


def test_compression_ordering_in_preset_output(tmp_path):
    assert _run("compression", PRESETS / "compression.yaml", tmp_path) == EXIT_OK
    doc = json.loads((tmp_path / "compression_summary.json").read_text())
    below, above = sorted(doc["points"], key=lambda p: p["freq_hz"])
    assert above["p_1db_dbm"] > below["p_1db_dbm"]
    one_liners = [p for p in tmp_path.iterdir() if p.name.startswith("compression_") and p.name != "compression_summary.json"
                  and p.suffix == ".json"]
    assert len(one_liners) == 2
    assert set(json.loads(one_liners[0].read_text())) == {"p_1db_dbm", "freq_hz"}


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "kit3wm.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0
    assert __version__ in res.stdout
