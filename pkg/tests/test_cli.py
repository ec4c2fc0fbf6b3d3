import math

import numpy as np
import numpy.testing as npt
import pytest

from ptfourwell import cli, four_mode
from ptfourwell.cli import ConfigError, ScenarioConfig


def empty_record():
    return four_mode.TrajectoryRecord(
        times=np.zeros(0), states=np.zeros((0, 4), dtype=complex),
        populations=np.zeros((0, 4)), currents=np.zeros((0, 3)),
        onsite=np.zeros((0, 2)), tunneling=np.zeros((0, 2)),
        gamma=np.zeros(0), residuals=np.zeros((0, 3)), completed=True)


def test_defaults_depend_on_the_scenario():
    stationary = cli.parse_config("scenario = stationary\n")
    assert (stationary.t_end, stationary.dt, stationary.out_every) \
        == (10.0, 2e-4, 50)
    assert stationary.gamma == 0.5 and stationary.j12 == 1.0
    adiabatic = cli.parse_config("scenario = adiabatic\n")
    assert (adiabatic.t_end, adiabatic.dt, adiabatic.out_every) \
        == (80.0, 4e-4, 250)
    assert adiabatic.gamma_f == 0.5 and adiabatic.t_f == 70.0
    physical = cli.parse_config("scenario = physical\n")
    assert (physical.t_end, physical.dt, physical.out_every) \
        == (80.0, 1e-3, 500)


def test_comments_blank_lines_and_values_parse():
    config = cli.parse_config(
        "# header comment\n"
        "scenario = oscillatory\n"
        "\n"
        "gamma = 0.25   # trailing comment\n"
        "minus_weight = 0.7\n"
        "control_scale = auto\n"
        "seed = 3\n")
    assert config.scenario == "oscillatory"
    assert config.gamma == 0.25
    assert config.minus_weight == 0.7
    assert config.control_scale is None
    assert config.seed == 3


def test_negative_dt_is_rejected_with_key_and_line():
    with pytest.raises(ConfigError) as err:
        cli.parse_config("scenario = stationary\ndt = -1\n", source="run.cfg")
    message = str(err.value)
    assert "run.cfg" in message and "line 2" in message and "'dt'" in message


@pytest.mark.parametrize("text,fragment", [
    ("scenario = stationary\nbogus = 1\n", "unknown key"),
    ("scenario = stationary\ngamma\n", "expected 'key = value'"),
    ("scenario = stationary\ngamma = 0.2\ngamma = 0.3\n", "duplicate"),
    ("gamma = 0.5\n", "missing required key 'scenario'"),
    ("scenario = sideways\n", "one of"),
    ("scenario = adiabatic\nminus_weight = 0.5\n", "does not apply"),
    ("scenario = physical\nj12 = 1.0\n", "does not apply"),
    ("scenario = stationary\nout_every = 0\n", "positive integer"),
    ("scenario = stationary\ngamma = fast\n", "as a number"),
    ("scenario = physical\ndepth_outer = 10\n", "negative"),
])
def test_malformed_configs_are_rejected(text, fragment):
    with pytest.raises(ConfigError) as err:
        cli.parse_config(text)
    assert fragment in str(err.value)


def test_equivalence_tolerance_resolution():
    clean = cli.parse_config("scenario = stationary\n")
    assert cli.resolved_equivalence_tolerance(clean) == 1e-6
    noisy = cli.parse_config("scenario = stationary\nperturbation = 1e-3\n")
    assert cli.resolved_equivalence_tolerance(noisy) == 0.05
    interacting = cli.parse_config("scenario = stationary\ninteraction = 0.2\n")
    assert math.isinf(cli.resolved_equivalence_tolerance(interacting))
    adiabatic = cli.parse_config("scenario = adiabatic\n")
    assert math.isinf(cli.resolved_equivalence_tolerance(adiabatic))
    states = cli.parse_config(
        "scenario = adiabatic\nequivalence_tolerance = 1e-3\n")
    assert cli.resolved_equivalence_tolerance(states) == 1e-3


def test_write_series_header_and_digits(tmp_path):
    record = empty_record()
    path = tmp_path / "empty.csv"
    cli.write_series(record, path)
    assert path.read_bytes() == \
        b"t,n0,n1,n2,n3,j01,j12,j23,E0,E3,J01,J23,Gamma,r1,r2,r3\n"

    record = four_mode.TrajectoryRecord(
        times=np.array([1.0 / 3.0]), states=np.zeros((1, 4), dtype=complex),
        populations=np.full((1, 4), 2.0 / 3.0), currents=np.zeros((1, 3)),
        onsite=np.zeros((1, 2)), tunneling=np.zeros((1, 2)),
        gamma=np.zeros(1), residuals=np.zeros((1, 3)), completed=True)
    path = tmp_path / "digits.csv"
    cli.write_series(record, path)
    lines = path.read_text().splitlines()
    assert lines[1].startswith("0.333333333333333,0.666666666666667")
    assert "\r" not in path.read_bytes().decode()


def test_write_series_appends_trap_columns(tmp_path):
    record = empty_record()
    path = tmp_path / "trap.csv"
    cli.write_series(record, path, trap_series={
        "V0": np.zeros(0), "V3": np.zeros(0),
        "delta0": np.zeros(0), "delta3": np.zeros(0)})
    header = path.read_text().strip()
    assert header.endswith("r1,r2,r3,V0,V3,delta0,delta3")


def test_sweep_expansion_and_validation():
    config = cli.parse_config("scenario = stationary\noutput = base.csv\n")
    swept = cli.parse_sweep("gamma=0.1:0.3:3", config)
    assert [c.gamma for c in swept] == pytest.approx([0.1, 0.2, 0.3])
    names = [c.output for c in swept]
    assert len(set(names)) == 3
    assert all(name.startswith("base_gamma_") for name in names)
    for text in ("gamma=0.1:0.3", "scenario=1:2:2", "gamma=a:b:3",
                 "minus_weight=0:1:2", "gamma=0.1:0.3:0"):
        with pytest.raises(ConfigError):
            cli.parse_sweep(text, config)
    with pytest.raises(ConfigError):
        # sweeping into invalid territory is caught up front
        cli.parse_sweep("dt=-1e-3:1e-3:3", config)


def test_short_stationary_run_writes_csv_and_passes(tmp_path):
    config = cli.parse_config(
        "scenario = stationary\nt_end = 0.5\noutput = run.csv\n")
    report = cli.run_scenario(config, tmp_path)
    assert report.exit_code == 0 and report.status == "ok"
    assert report.completed and not report.failures
    assert report.oracle_deviation < 1e-8
    assert report.max_r3 == 0.0
    lines = (tmp_path / "run.csv").read_text().splitlines()
    assert lines[0] == "t,n0,n1,n2,n3,j01,j12,j23,E0,E3,J01,J23,Gamma,r1,r2,r3"
    assert len(lines) == report.rows + 1
    assert any("ok" in line for line in report.lines())


def test_identical_configs_give_identical_bytes(tmp_path):
    text = "scenario = stationary\nt_end = 0.5\nperturbation = 1e-3\n"
    paths = []
    for name in ("a", "b"):
        config = cli.parse_config(text)
        cli.run_scenario(config, tmp_path / name)
        paths.append(tmp_path / name / "stationary.csv")
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_unmet_tolerance_exits_one(tmp_path):
    config = cli.parse_config(
        "scenario = stationary\nt_end = 0.5\nequivalence_tolerance = 1e-18\n")
    report = cli.run_scenario(config, tmp_path)
    assert report.exit_code == 1
    assert report.status == "tolerance failure"
    assert report.failures and "deviation" in report.failures[0]


def test_degenerate_controller_exits_three(tmp_path):
    config = cli.parse_config(
        "scenario = oscillatory\nminus_weight = 1.0\nt_end = 5.0\n"
        "dt = 1e-3\n")
    report = cli.run_scenario(config, tmp_path)
    assert report.exit_code == 3
    assert report.status == "numerical failure"
    assert not report.completed
    assert "controller" in report.termination_reason


def test_main_maps_input_errors_to_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("scenario = stationary\ndt = -1\n")
    assert cli.main(["run", "--config", str(bad)]) == 2
    assert "dt" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
    beyond = tmp_path / "beyond.cfg"
    beyond.write_text("scenario = stationary\ngamma = 1.5\n")
    assert cli.main(["run", "--config", str(beyond)]) == 2
    assert "exceptional" in capsys.readouterr().err


def test_main_runs_and_prints_a_report(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("scenario = stationary\nt_end = 0.5\n")
    code = cli.main(["run", "--config", str(cfg), "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "scenario            stationary" in out
    assert (tmp_path / "stationary.csv").exists()


def test_main_sweep_writes_isolated_outputs(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("scenario = stationary\nt_end = 0.3\n")
    code = cli.main(["run", "--config", str(cfg), "--out", str(tmp_path),
                     "--sweep", "gamma=0.2:0.4:2"])
    assert code == 0
    outputs = sorted(p.name for p in tmp_path.glob("stationary_gamma_*.csv"))
    assert len(outputs) == 2
    capsys.readouterr()
