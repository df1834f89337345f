"""
zitter_cli 端到端测试：各子命令的输出文件、退出码、重复运行逐字节一致
"""

import json

import numpy as np
import pytest

from channeling import get_constants
from output_writer import read_csv
from zitter_cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, run_command


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.setenv("ZITTER_WORKERS", "1")
    monkeypatch.setenv("ZITTER_CONSTANTS", "rounded")


def _run(tmp_path, name, *argv):
    out = tmp_path / name
    code = run_command(["--output-dir", str(out), *argv])
    return code, out


def _json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


FREE_ARGS = ("free", "--scheme", "lie", "--periods", "2", "--steps-per-period", "100", "--record-every", "20")


def test_free_lightlike_matches_closed_form(tmp_path):
    code, out = _run(tmp_path, "free", *FREE_ARGS)
    assert code == EXIT_OK
    header, columns, data = read_csv(str(out / "free_trajectory.csv"))
    assert header["command"] == "free"
    assert columns[-2:] == ["max_invariant_drift", "oracle_error"]
    assert data.shape[0] == 11
    assert np.max(data[:, -1]) < 1e-8
    assert np.max(data[:, -2]) < 1e-8
    assert (out / "config.json").exists()


def test_repeated_runs_are_byte_identical(tmp_path):
    _, first = _run(tmp_path, "a", *FREE_ARGS)
    _, second = _run(tmp_path, "b", *FREE_ARGS)
    assert (first / "free_trajectory.csv").read_bytes() == (second / "free_trajectory.csv").read_bytes()


def test_lab_units_rescale_time_and_length(tmp_path):
    _, natural = _run(tmp_path, "natural", *FREE_ARGS)
    code, lab = _run(tmp_path, "lab", "--units", "lab", *FREE_ARGS)
    assert code == EXIT_OK
    _, columns, n = read_csv(str(natural / "free_trajectory.csv"))
    _, _, l = read_csv(str(lab / "free_trajectory.csv"))
    constants = get_constants("rounded")
    tau = columns.index("tau")
    z1 = columns.index("z1")
    m = columns.index("m")
    assert l[:, tau] == pytest.approx(n[:, tau] * constants.compton_bar / constants.c, rel=1e-12)
    assert l[:, z1] == pytest.approx(n[:, z1] * constants.compton_bar, rel=1e-12, abs=1e-30)
    assert np.array_equal(l[:, m], n[:, m])


def test_free_timelike(tmp_path):
    code, out = _run(tmp_path, "timelike", "free", "--mode", "timelike", "--periods", "1",
                     "--steps-per-period", "40", "--record-every", "4")
    assert code == EXIT_OK
    header, columns, data = read_csv(str(out / "free_trajectory.csv"))
    assert header["mode"] == "timelike"
    assert columns == ["tau", "z0", "z1", "z2", "z3", "spin_drift"]
    assert data.shape[0] == 11
    # 静止系中 z = tau gamma0
    assert data[:, 1] == pytest.approx(data[:, 0], abs=1e-12)
    assert np.max(np.abs(data[:, 2:5])) < 1e-12


def test_simulate_reports_invariant_failure(tmp_path):
    config = tmp_path / "drift.json"
    config.write_text(json.dumps({
        "integrator": {"field": "uniform", "E": [0.05, 0.0, 0.0], "scheme": "rk4",
                       "periods": 1, "steps_per_period": 20, "record_every": 5},
        "tolerances": {"mass_integral": 1e-30},
    }), encoding="utf-8")
    code, out = _run(tmp_path, "drift", "--config", str(config), "simulate")
    assert code == EXIT_FAILURE
    error = _json(out / "error.json")
    assert error["status"] == "error"
    assert error["kind"] == "invariant"
    assert error["result"] is None
    header, _, data = read_csv(str(out / "simulate_trajectory_partial.csv"))
    assert "aborted_monitor" in header
    assert data.shape[0] >= 2


def test_simulate_uniform_field(tmp_path):
    config = tmp_path / "uniform.json"
    config.write_text(json.dumps({
        "integrator": {"field": "uniform", "B": [0.0, 0.0, 0.04], "scheme": "rk4",
                       "periods": 2, "steps_per_period": 200, "record_every": 50},
    }), encoding="utf-8")
    code, out = _run(tmp_path, "uniform", "--config", str(config), "simulate")
    assert code == EXIT_OK
    header, columns, data = read_csv(str(out / "simulate_trajectory.csv"))
    assert header["field"] == "uniform"
    assert data.shape == (9, len(columns))
    assert np.max(data[:, columns.index("max_invariant_drift")]) < 1e-8


def test_channel_orbit(tmp_path):
    code, out = _run(tmp_path, "orbit", "channel-orbit", "--periods", "800")
    assert code == EXIT_OK
    summary = _json(out / "channel_orbit.json")
    resonance = summary["resonance"]
    assert resonance["h"] == pytest.approx(9.283e-3, rel=0.01)
    assert resonance["stable"] is False
    assert summary["radial_fit"]["exponent"] == pytest.approx(resonance["analytic_growth"], rel=0.1)
    assert summary["orbit"]["angular_momentum_drift"] < 1e-6

    _, columns, data = read_csv(str(out / "channel_orbit.csv"))
    assert columns == ["t_s", "x_A", "y_A", "r_A", "L"]
    assert data.shape[0] == 2001
    assert data[:, 3] == pytest.approx(0.5, rel=1e-6)
    _, _, radial = read_csv(str(out / "radial_envelope.csv"))
    assert radial[0, 1] == 1.0


def test_channel_scan_is_independent_of_worker_count(tmp_path):
    args = ("channel-scan", "--p-min", "80", "--p-max", "82", "--steps", "9")
    code, serial = _run(tmp_path, "serial", *args)
    assert code == EXIT_OK
    code = run_command(["--output-dir", str(tmp_path / "pool"), "--workers", "2", *args])
    assert code == EXIT_OK
    assert (serial / "channel_scan.csv").read_bytes() == (tmp_path / "pool" / "channel_scan.csv").read_bytes()

    _, columns, data = read_csv(str(serial / "channel_scan.csv"))
    assert columns == ["p_MeV", "growth_per_atom", "atoms_to_double", "ejected_fraction"]
    assert data.shape[0] == 9
    summary = _json(serial / "channel_scan.json")
    assert 80.0 < summary["center_MeV"] < 82.0
    assert summary["peak_count"] == 1


def test_higher_order_analytic_scan_is_usage_error(tmp_path):
    code, out = _run(tmp_path, "order", "channel-scan", "--order", "2", "--steps", "5")
    assert code == EXIT_USAGE
    assert _json(out / "error.json")["kind"] == "usage"


def test_floquet_on_and_off_band(tmp_path):
    code, out = _run(tmp_path, "on", "floquet", "--q", "1", "--h", "0.1", "--omega", "2")
    assert code == EXIT_OK
    result = _json(out / "floquet.json")
    assert result["stable"] is False
    assert result["methods_agree"] is True
    assert result["s"][0] == pytest.approx(0.025, rel=0.05)
    assert result["wronskian"] == pytest.approx(1.0, abs=1e-8)

    code, out = _run(tmp_path, "off", "floquet", "--q", "1", "--h", "0.1", "--omega", "3")
    assert code == EXIT_OK
    result = _json(out / "floquet.json")
    assert result["stable"] is True
    assert abs(result["s"][0]) < 1e-6


def test_floquet_defaults_come_from_channel(tmp_path):
    code, out = _run(tmp_path, "default", "floquet")
    assert code == EXIT_OK
    result = _json(out / "floquet.json")
    assert result["q"] == 1.0
    assert result["omega"] == pytest.approx(2.0, rel=1e-9)
    assert result["h"] == pytest.approx(9.283e-3, rel=0.01)


def test_dirac_check(tmp_path):
    code, out = _run(tmp_path, "dirac", "dirac-check")
    assert code == EXIT_OK
    report = _json(out / "dirac_check.json")
    assert report["passed"] is True
    assert len(report["checks"]) == 9
    assert (out / "dirac_check.txt").read_text(encoding="utf-8").count("\n") == 10


def test_usage_errors(tmp_path, capsys):
    assert run_command(["no-such-command"]) == EXIT_USAGE
    code = run_command(["--output-dir", str(tmp_path), "--config", str(tmp_path / "absent.json"), "floquet"])
    assert code == EXIT_USAGE
    response = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert response["status"] == "error"
    assert response["kind"] == "config"


def test_invalid_override_names_key(tmp_path, capsys):
    code = run_command(["--output-dir", str(tmp_path), "floquet", "--h", "2.0"])
    assert code == EXIT_USAGE
    response = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert response["message"].startswith("floquet.h: ")


def test_help_exits_cleanly():
    assert run_command(["--help"]) == EXIT_OK
