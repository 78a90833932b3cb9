import csv
import json
import math

import numpy as np
import pytest

from superramsey import cli
from superramsey.config import RunConfig, default_config, load, loads
from superramsey.errors import ConfigError
from superramsey.fitting import gaussian

FAST = """
[protocol]
segments = ["drive:0.2", "free:0.3"]
[integrator]
sample_dt_ns = 5.0
"""


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_round_trip_default():
    cfg = default_config()
    assert loads(cfg.dumps()) == cfg
    assert loads(loads(cfg.dumps()).dumps()).dumps() == cfg.dumps()


def test_round_trip_custom():
    text = """
[system]
n1 = 3e6
omega2_hz = 4.16e5
[protocol]
segments = ["pi_half", {duration_us = 1.5, delta_hz = 2e4, label = "wait"}, "pi_half", "readout:2"]
readout_window_us = [2.1, 4.0]
[lock]
cycles = 4
normalized = true
"""
    cfg = loads(text)
    assert loads(cfg.dumps()) == cfg
    proto = cfg.protocol.to_protocol(cfg.system.to_params())
    assert len(proto.segments) == 4 and proto.segments[1].label == "wait"


@pytest.mark.parametrize("text", [
    "[system]\nbogus = 1\n",
    "[nonsense]\n",
    "[system]\nkappa_hz = -1\n",
    "[protocol]\nsegments = [\"warp:3\"]\n",
    "[protocol]\nsegments = [\"drive\"]\n",
    "[protocol]\nsegments = []\n",
    "not toml = = =",
])
def test_invalid_config_rejected(text):
    with pytest.raises(ConfigError):
        loads(text)


def test_units_converted_once():
    p = loads("[system]\nkappa_hz = 1.0\nomega1_hz = 2.0\n").system.to_params()
    assert p.kappa == 2 * math.pi and p.omega[0] == 4 * math.pi


def test_sweep_grid():
    cfg = loads("[sweep]\ndelta_min_hz = -10.0\ndelta_max_hz = 10.0\npoints = 5\n")
    np.testing.assert_allclose(np.array(cfg.sweep.deltas()) / (2 * math.pi), [-10, -5, 0, 5, 10])


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load(tmp_path / "missing.toml")


def test_config_command(capsys):
    assert cli.main(["config"]) == 0
    assert loads(capsys.readouterr().out) == RunConfig()


def run_cli(args, tmp_path, capsys=None):
    return cli.main(list(args) + ["-o", str(tmp_path / "out")])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_simulate_outputs(tmp_path):
    cfg = write(tmp_path, FAST)
    assert run_cli(["simulate", "-c", str(cfg)], tmp_path) == 0
    rows = read_csv(tmp_path / "out" / "trajectory.csv")
    assert rows[0] == ["t_s", "n_phot", "re_a", "im_a", "s22_1", "s22_2", "jbar_plus",
                       "mbar_plus", "jbar_minus", "mbar_minus", "ax_plus", "ay_plus",
                       "az_plus", "ax_minus", "ay_minus", "az_minus"]
    assert float(rows[-1][0]) == pytest.approx(0.5e-6)
    # shortest round-trip formatting loses nothing
    for field in rows[len(rows) // 2]:
        assert repr(float(field)) == field
    pulse = json.loads((tmp_path / "out" / "pulse.json").read_text())
    assert {"i_max", "i_int", "t_delay", "tau", "detected"} <= set(pulse)
    record = json.loads((tmp_path / "out" / "simulate_record.json").read_text())
    assert record["exit_status"] == 0 and record["config"]["integrator"]["sample_dt_ns"] == 5.0


def test_simulate_byte_identical(tmp_path):
    cfg = write(tmp_path, FAST)
    cli.main(["simulate", "-c", str(cfg), "-o", str(tmp_path / "a")])
    cli.main(["simulate", "-c", str(cfg), "-o", str(tmp_path / "b")])
    a = (tmp_path / "a" / "trajectory.csv").read_bytes()
    assert a == (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_simulate_without_drive_gives_zero_columns(tmp_path):
    cfg = write(tmp_path, FAST + "[system]\nomega1_hz = 0.0\nomega2_hz = 0.0\n")
    assert run_cli(["simulate", "-c", str(cfg)], tmp_path) == 0
    rows = read_csv(tmp_path / "out" / "trajectory.csv")
    data = np.array(rows[1:], dtype=float)
    for col in ("n_phot", "re_a", "im_a", "s22_1", "s22_2"):
        assert np.all(data[:, rows[0].index(col)] == 0)


def test_output_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.main(["simulate", "-c", str(write(tmp_path, FAST))]) == 0
    assert (tmp_path / "env" / "trajectory.csv").exists()


def test_exit_config_error(tmp_path):
    cfg = write(tmp_path, "[system]\nbogus = 1\n")
    assert run_cli(["simulate", "-c", str(cfg)], tmp_path) == 2
    cfg = write(tmp_path, "[system]\nomega1_hz = 0.0\nomega2_hz = 0.0\n"
                          "[protocol]\nsegments = [\"pi_half\"]\n")
    assert run_cli(["simulate", "-c", str(cfg)], tmp_path) == 2


def test_exit_numeric_error_removes_partial_csv(tmp_path):
    cfg = write(tmp_path, FAST + "max_steps = 3\n")
    assert run_cli(["simulate", "-c", str(cfg)], tmp_path) == 3
    out = tmp_path / "out"
    assert not (out / "trajectory.csv").exists()
    assert not [p for p in out.iterdir() if p.suffix == ".tmp" or p.name.startswith(".")]
    record = json.loads((out / "simulate_record.json").read_text())
    assert record["exit_status"] == 3 and record["errors"][0]["type"] == "StepLimitExceeded"


def test_atomic_write_failure_leaves_nothing(tmp_path):
    def rows():
        yield (1.0, 2.0)
        raise RuntimeError("boom")
    with pytest.raises(RuntimeError):
        cli.write_csv(tmp_path / "x.csv", ["a", "b"], rows())
    assert list(tmp_path.iterdir()) == []


def trace_file(tmp_path, values):
    t = np.arange(0, 1.0e-6, 1e-9)
    path = tmp_path / "trace.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "n_phot"])
        for a, b in zip(t, values(t)):
            w.writerow([repr(float(a)), repr(float(b))])
    return path


def test_fit_command(tmp_path):
    path = trace_file(tmp_path, lambda t: gaussian(t, 1e4, 0.55e-6, 0.16e-6))
    assert run_cli(["fit", str(path), "--t0-us", "0.1"], tmp_path) == 0
    fit = json.loads((tmp_path / "out" / "fit.json").read_text())
    assert fit["t_delay"] == pytest.approx(0.45e-6, rel=1e-3)
    assert fit["tau"] == pytest.approx(0.16e-6, rel=1e-3)


def test_fit_failure_exit_four(tmp_path):
    path = trace_file(tmp_path, lambda t: np.zeros_like(t))
    assert run_cli(["fit", str(path), "--t0-us", "0.1"], tmp_path) == 4


def test_fit_bad_window(tmp_path):
    path = trace_file(tmp_path, lambda t: gaussian(t, 1.0, 0.5e-6, 0.1e-6))
    assert run_cli(["fit", str(path), "--t0-us", "5"], tmp_path) == 2


def test_validate_uncoupled_passes(tmp_path):
    cfg = write(tmp_path, "[oracle]\ng_hz = 0.0\nfock_cutoff = 2\ntotal_us = 0.5\n"
                          "check_cutoff = false\n[integrator]\nsample_dt_ns = 10.0\n")
    assert run_cli(["validate", "-c", str(cfg)], tmp_path) == 0
    report = json.loads((tmp_path / "out" / "validate_report.json").read_text())
    assert report["passed"]
    for name in ("s22[1]", "s12[1]"):
        assert report["fields"][name]["max_abs_error"] < 1e-6


def test_lock_identical_cycles(tmp_path):
    cfg = write(tmp_path, "[lock]\ncycles = 3\ngamma_loss_per_ms = 0.0\nn0 = 2e7\n"
                          "atom_offset_hz = 5e3\n[integrator]\nsample_dt_ns = 2.0\n")
    assert run_cli(["lock", "-c", str(cfg)], tmp_path) == 0
    rows = read_csv(tmp_path / "out" / "lock.csv")
    assert rows[0] == ["cycle", "t_ms", "sign", "i_int", "n_atoms", "error_signal"]
    plus = {r[3] for r in rows[1:] if r[2] == "1"}
    assert len(plus) == 1 and len(rows) == 7


def test_sweep_columns(tmp_path):
    cfg = write(tmp_path, "[sweep]\ndelta_min_hz = -2e4\ndelta_max_hz = 2e4\npoints = 3\n"
                          "[integrator]\nsample_dt_ns = 2.0\n")
    assert run_cli(["sweep", "-c", str(cfg), "--jobs", "2"], tmp_path) == 0
    rows = read_csv(tmp_path / "out" / "sweep.csv")
    assert rows[0][:7] == ["delta_hz", "phi_rad", "i_int", "i_max", "t_delay_s", "tau_s",
                           "detected"]
    assert float(rows[1][2]) == pytest.approx(float(rows[3][2]), rel=0.02)


def test_ramsey_command(tmp_path):
    assert run_cli(["ramsey", "--t-free-us", "0", "--delta-hz", "0"], tmp_path) == 0
    res = json.loads((tmp_path / "out" / "ramsey_pulse.json").read_text())
    assert res["detected"] and res["phi_rad"] == 0
