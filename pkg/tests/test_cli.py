import numpy as np
import pytest

from qgrape import dynamics as dyn
from qgrape import experiments as exp
from qgrape.cli import main

SWEEP_CONFIG = """
noise = dephasing
noise.theta = 1.5707963267948966
noise.gamma = 0.1
omega0_true = 1.0
T = 2.0
dt = 0.1
ascent.step_size = 0.1
ascent.max_iterations = 20
ascent.seed = 5
ascent.init_mode = zero
sweep = omega_hat
sweep.start = 0.95
sweep.stop = 1.05
sweep.points = 3
"""


def test_oracle_transverse_prints_six_significant_digits(capsys):
    assert main(["oracle", "transverse", "--gamma", "0.1", "--horizon", "5"]) == 0
    out = capsys.readouterr().out.strip()
    assert out == "21.3061"


def test_oracle_parallel_and_spontaneous(capsys):
    assert main(["oracle", "parallel", "--gamma", "0.1", "--horizon", "10"]) == 0
    assert capsys.readouterr().out.strip() == "13.5335"
    assert main(
        ["oracle", "spontaneous", "--gamma-minus", "0.1", "--horizon", "20"]
    ) == 0
    assert capsys.readouterr().out.strip() == "54.1341"


def test_oracle_pulse_models(capsys):
    assert main(
        ["oracle", "parallel-pulse", "--gamma", "0.1", "--horizon", "15", "--t0", "0"]
    ) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.0, abs=1e-12)
    assert main(
        ["oracle", "spontaneous-pulse", "--gamma-minus", "0.1", "--horizon", "16",
         "--t0", "0"]
    ) == 0
    assert float(capsys.readouterr().out) == pytest.approx(256 * np.exp(-1.6), rel=1e-4)


def test_missing_config_exits_one_and_names_file(tmp_path, capsys):
    missing = tmp_path / "missing.cfg"
    code = main(["optimize", "--config", str(missing)])
    assert code == 1
    assert "missing.cfg" in capsys.readouterr().err


def test_bad_config_key_exits_one(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("omega0_true = 1\nT = 1\nturbo = yes\n")
    assert main(["simulate", "--config", str(cfg)]) == 1
    assert "turbo" in capsys.readouterr().err


def test_simulate_reports_information(tmp_path, capsys):
    cfg = tmp_path / "scenario.cfg"
    cfg.write_text("noise = dephasing\nnoise.gamma = 0.1\nomega0_true = 1.0\nT = 2.0\ndt = 0.1\n")
    assert main(["simulate", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "qfi = " in out and "cfi = " in out


def test_optimize_writes_schedule_and_history(tmp_path, capsys):
    cfg = tmp_path / "scenario.cfg"
    cfg.write_text(
        "noise = dephasing\nnoise.gamma = 0.1\nomega0_true = 1.0\nT = 2.0\ndt = 0.1\n"
        "ascent.max_iterations = 10\nascent.init_mode = zero\n"
    )
    out_dir = tmp_path / "run"
    assert main(["optimize", "--config", str(cfg), "--out", str(out_dir)]) == 0
    assert (out_dir / "schedule.csv").exists()
    history = (out_dir / "history.csv").read_text().splitlines()
    assert history[0] == "iteration,objective"
    assert len(history) == 12  # header + initial + 10 iterations


def test_sweep_writes_deterministic_outputs(tmp_path):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(SWEEP_CONFIG)
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    assert main(["sweep", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["sweep", "--config", str(cfg), "--out", str(out2)]) == 0
    name = "robustness_scan.csv"
    assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    exp.check_output_schema(out1 / name)
    assert (out1 / "manifest.txt").read_text().startswith("[versions]")


def test_sweep_without_out_dir_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(SWEEP_CONFIG)
    assert main(["sweep", "--config", str(cfg)]) == 1


def test_seed_override_changes_outputs(tmp_path):
    cfg = tmp_path / "sweep.cfg"
    text = SWEEP_CONFIG.replace("ascent.init_mode = zero", "ascent.init_mode = random")
    cfg.write_text(text)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["sweep", "--config", str(cfg), "--out", str(out2), "--seed", "99"]) == 0
    name = "robustness_scan.csv"
    assert (out1 / name).read_bytes() != (out2 / name).read_bytes()


def test_numerical_failure_exits_two(tmp_path, capsys, monkeypatch):
    import qgrape.cli as cli_module
    from qgrape.errors import NumericalStabilityError

    cfg = tmp_path / "scenario.cfg"
    cfg.write_text("noise = dephasing\nnoise.gamma = 0.1\nomega0_true = 1.0\nT = 1.0\ndt = 0.1\n")

    def blow_up(*args, **kwargs):
        raise NumericalStabilityError("state lost positivity at step 3", step=3)

    monkeypatch.setattr(cli_module, "propagate", blow_up)
    assert main(["simulate", "--config", str(cfg)]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_schedule_horizon_mismatch_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "scenario.cfg"
    cfg.write_text("omega0_true = 1.0\nT = 2.0\ndt = 0.1\n")
    sched = tmp_path / "schedule.csv"
    exp.write_schedule(sched, dyn.ControlGrid.zeros(5, 3, 0.1))  # horizon 0.5 != 2.0
    assert main(["simulate", "--config", str(cfg), "--schedule", str(sched)]) == 1


def test_energy_command(tmp_path, capsys):
    sched = tmp_path / "schedule.csv"
    grid = dyn.ControlGrid.constant([0.0, 0.0, -0.5], 200, 0.05)
    exp.write_schedule(sched, grid)
    assert main(["energy", "--schedule", str(sched)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "t,energy"
    t_final, e_final = (float(x) for x in lines[-1].split(","))
    assert t_final == pytest.approx(10.0)
    assert e_final == pytest.approx(2.5, abs=1e-9)


def test_simulate_with_schedule_file(tmp_path, capsys):
    cfg = tmp_path / "scenario.cfg"
    cfg.write_text(
        "noise = dephasing\nnoise.gamma = 0.1\nomega0_true = 1.0\nT = 5.0\ndt = 0.05\n"
    )
    sched = tmp_path / "schedule.csv"
    exp.write_schedule(sched, dyn.ControlGrid.constant([0.0, 0.0, -0.5 * 1.0001], 100, 0.05))
    assert main(["simulate", "--config", str(cfg), "--schedule", str(sched)]) == 0
    out = capsys.readouterr().out
    qfi_line = next(line for line in out.splitlines() if line.startswith("qfi"))
    assert float(qfi_line.split("=")[1]) == pytest.approx(21.306, abs=0.01)
