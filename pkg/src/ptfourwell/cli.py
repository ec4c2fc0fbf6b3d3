"""Command line front end: configured scenario runs and built-in checks.

Run configurations are plain text files with one ``key = value`` pair per
line and ``#`` comments.  Unknown keys, keys that do not apply to the chosen
scenario and out-of-range values are rejected with the offending line
number.  All times and energies are model units (hbar = 1); ``gamma`` and
``gamma_f`` are measured in units of the middle coupling, so the same
config reads identically for dimensionless and trap-derived runs.

    ptfourwell run --config run.cfg [--out DIR] [--sweep key=a:b:n]
    ptfourwell check [--only 1,4,9]

Every run writes a CSV time series and also integrates the open two-mode
system the middle pair is meant to emulate, reporting the maximum deviation
of the middle populations and current from that reference.

Exit codes: 0 success, 1 tolerance failure, 2 input error, 3 numerical
failure (controller singularity, drained reservoir, non-convergence).
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import four_mode, physical_map, prepare, two_mode

SCENARIOS = ("stationary", "oscillatory", "adiabatic", "physical")
ORACLE_RTOL = 1e-10


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one run; defaults depend on the scenario.

    `gamma` (stationary, oscillatory) and `gamma_f` (adiabatic, physical)
    are ratios to the middle coupling.  `control_scale` of None means the
    feedback gain is determined automatically.  `equivalence_tolerance` of
    None resolves to 1e-6 for clean linear runs, to 0.05 for perturbed
    ones and to no check otherwise.
    """

    scenario: str
    j12: float = 1.0
    gamma: float = 0.5
    gamma_f: float = 0.5
    t_f: float = 70.0
    interaction: float = 0.0
    control_scale: float | None = None
    n0: float = 40.0
    n3: float = 40.0
    minus_weight: float = 0.4
    t_end: float = 10.0
    dt: float = 2e-4
    out_every: int = 50
    output: str | None = None
    perturbation: float = 0.0
    seed: int = 0
    residual_tolerance: float = 1e-8
    norm_tolerance: float = 1e-10
    equivalence_tolerance: float | None = None
    reservoir_energy: float = -6.0
    reservoir_coupling: float = 0.5
    reservoir_floor: float = 1e-3
    well_distance: float = 2e-6
    particle_number: float = 1e5
    scattering_bohr: float = 10.9
    depth_outer: float = -122.0
    depth_middle: float = -80.0
    beam_width_x: float = 4.0
    beam_width_y: float = 4.0
    beam_width_z: float = 0.5


def _number(text):
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"could not parse {text!r} as a number") from None


def _positive(text):
    value = _number(text)
    if value <= 0.0:
        raise ValueError("must be positive")
    return value


def _nonnegative(text):
    value = _number(text)
    if value < 0.0:
        raise ValueError("must be nonnegative")
    return value


def _negative(text):
    value = _number(text)
    if value >= 0.0:
        raise ValueError("must be negative (well depths point down)")
    return value


def _count(text):
    try:
        value = int(text, 10)
    except ValueError:
        raise ValueError(f"could not parse {text!r} as an integer") from None
    if value < 1:
        raise ValueError("must be a positive integer")
    return value


def _seed(text):
    try:
        value = int(text, 10)
    except ValueError:
        raise ValueError(f"could not parse {text!r} as an integer") from None
    if value < 0:
        raise ValueError("must be a nonnegative integer")
    return value


def _scenario(text):
    if text not in SCENARIOS:
        raise ValueError(f"expected one of {', '.join(SCENARIOS)}")
    return text


def _gain_or_auto(text):
    if text == "auto":
        return None
    return _positive(text)


def _filename(text):
    if not text:
        raise ValueError("must not be empty")
    return text


_CONVERTERS = {
    "scenario": _scenario,
    "j12": _positive,
    "gamma": _nonnegative,
    "gamma_f": _nonnegative,
    "t_f": _positive,
    "interaction": _number,
    "control_scale": _gain_or_auto,
    "n0": _positive,
    "n3": _positive,
    "minus_weight": _nonnegative,
    "t_end": _positive,
    "dt": _positive,
    "out_every": _count,
    "output": _filename,
    "perturbation": _nonnegative,
    "seed": _seed,
    "residual_tolerance": _positive,
    "norm_tolerance": _positive,
    "equivalence_tolerance": _positive,
    "reservoir_energy": _number,
    "reservoir_coupling": _positive,
    "reservoir_floor": _positive,
    "well_distance": _positive,
    "particle_number": _positive,
    "scattering_bohr": _positive,
    "depth_outer": _negative,
    "depth_middle": _negative,
    "beam_width_x": _positive,
    "beam_width_y": _positive,
    "beam_width_z": _positive,
}

_COMMON_KEYS = {
    "scenario", "t_end", "dt", "out_every", "output", "perturbation", "seed",
    "residual_tolerance", "norm_tolerance", "equivalence_tolerance",
    "reservoir_floor",
}
_ALLOWED_KEYS = {
    "stationary": _COMMON_KEYS | {
        "j12", "interaction", "gamma", "n0", "n3", "control_scale"},
    "oscillatory": _COMMON_KEYS | {
        "j12", "interaction", "gamma", "n0", "n3", "control_scale",
        "minus_weight"},
    "adiabatic": _COMMON_KEYS | {
        "j12", "interaction", "gamma_f", "t_f", "reservoir_energy",
        "reservoir_coupling"},
    "physical": _COMMON_KEYS | {
        "gamma_f", "t_f", "well_distance", "particle_number",
        "scattering_bohr", "depth_outer", "depth_middle",
        "beam_width_x", "beam_width_y", "beam_width_z"},
}
# scenario-dependent defaults; everything else carries its field default
_DEFAULTS = {
    "stationary": {"t_end": 10.0, "dt": 2e-4, "out_every": 50},
    "oscillatory": {"t_end": 10.0, "dt": 2e-4, "out_every": 50},
    "adiabatic": {"t_end": 80.0, "dt": 4e-4, "out_every": 250},
    "physical": {"t_end": 80.0, "dt": 1e-3, "out_every": 500},
}


def parse_config(text, source="config"):
    """Parse ``key = value`` lines into a ScenarioConfig.

    Raises ConfigError naming the source and line for unknown keys,
    duplicates, unparsable or out-of-range values, and for keys that do
    not apply to the configured scenario.
    """
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or not key:
            raise ConfigError(
                f"{source}, line {lineno}: expected 'key = value', "
                f"got {raw.strip()!r}")
        if key not in _CONVERTERS:
            raise ConfigError(f"{source}, line {lineno}: unknown key {key!r}")
        if key in entries:
            first = entries[key][0]
            raise ConfigError(
                f"{source}, line {lineno}: duplicate key {key!r} "
                f"(first set on line {first})")
        entries[key] = (lineno, value)

    if "scenario" not in entries:
        raise ConfigError(f"{source}: missing required key 'scenario'")

    lineno, value = entries["scenario"]
    try:
        scenario = _scenario(value)
    except ValueError as exc:
        raise ConfigError(
            f"{source}, line {lineno}: key 'scenario': {exc}") from None

    allowed = _ALLOWED_KEYS[scenario]
    settings = dict(_DEFAULTS[scenario])
    settings["scenario"] = scenario
    for key, (lineno, value) in entries.items():
        if key == "scenario":
            continue
        if key not in allowed:
            raise ConfigError(
                f"{source}, line {lineno}: key {key!r} does not apply to "
                f"the {scenario!r} scenario")
        try:
            settings[key] = _CONVERTERS[key](value)
        except ValueError as exc:
            raise ConfigError(
                f"{source}, line {lineno}: key {key!r}: {exc}") from None
    return ScenarioConfig(**settings)


def load_config(path):
    return parse_config(Path(path).read_text(encoding="utf-8"), source=str(path))


@dataclass(frozen=True)
class TrapContext:
    """Trap geometry behind a physical run, kept for the inversion columns."""

    trap: physical_map.TrapGeometry
    ansatz: physical_map.GaussianAnsatz
    constants: physical_map.PhysicalConstants
    units: physical_map.PhysicalUnits
    offset: float
    signs: tuple


@dataclass(frozen=True)
class RunSetup:
    """Everything run_trajectory needs, plus the two-mode reference data."""

    params: four_mode.FourModeParams
    schedule: prepare.GainLossSchedule
    initial: np.ndarray
    middle_initial: np.ndarray
    middle_interaction: float
    trap: TrapContext | None = None


def _embedded_setup(config):
    j = config.j12
    gain = config.gamma * j
    if config.scenario == "stationary":
        middle = prepare.stationary_middle_state(j, gain)
    else:
        middle = prepare.oscillatory_middle_state(j, gain, config.minus_weight)
    phases = None
    scale = config.control_scale
    if scale is None:
        scale, phases = prepare.auto_control_scale(
            middle, config.n0, config.n3, gain, j, with_phases=True)
    spec = prepare.EmbeddingSpec(middle, config.n0, config.n3, gain, scale)
    state = prepare.embed_pt_state(spec, initial_phases=phases)
    params = four_mode.FourModeParams(
        0.0, 0.0, 0.0, j, 0.0, interaction=config.interaction,
        control_scale=scale)
    return RunSetup(params, prepare.GainLossSchedule.constant(gain), state,
                    middle, config.interaction)


def _ground_state_setup(base, config):
    ground = prepare.hermitian_ground_state(base)
    state, c_run = prepare.rescale_to_middle(ground, base.interaction)
    c02 = 2.0 * (state[0] * np.conj(state[2])).real
    # launch with J01(0) = j01 of the reference chain, so the static ground
    # state satisfies the current conditions (trivially, by zero currents)
    scale = base.j01 / c02
    params = replace(base, interaction=c_run, control_scale=scale)
    schedule = prepare.GainLossSchedule.cosine_ramp(
        config.gamma_f * base.j12, config.t_f)
    return params, schedule, state


def _adiabatic_setup(config):
    j = config.j12
    base = four_mode.FourModeParams(
        e0=config.reservoir_energy * j, e3=config.reservoir_energy * j,
        j01=config.reservoir_coupling * j, j12=j,
        j23=config.reservoir_coupling * j, interaction=config.interaction)
    params, schedule, state = _ground_state_setup(base, config)
    return RunSetup(params, schedule, state, state[1:3].copy(),
                    params.interaction)


def _physical_setup(config):
    constants = physical_map.rubidium87(config.particle_number,
                                        config.scattering_bohr)
    units = physical_map.physical_units(config.well_distance, constants)
    trap = physical_map.TrapGeometry.lattice(
        (config.depth_outer, config.depth_middle, config.depth_middle,
         config.depth_outer),
        (config.beam_width_x, config.beam_width_y, config.beam_width_z))
    ansatz = physical_map.optimize_widths(trap, constants, units,
                                          (1.0, 1.0, 8.0))
    elements = physical_map.matrix_elements(trap, ansatz, constants, units)
    base, offset, signs = physical_map.chain_parameters(elements)
    params, schedule, state = _ground_state_setup(base, config)
    context = TrapContext(trap, ansatz, constants, units, offset, signs)
    return RunSetup(params, schedule, state, state[1:3].copy(),
                    params.interaction, trap=context)


def prepare_run(config: ScenarioConfig) -> RunSetup:
    """Build initial state, schedule and chain parameters for a config."""
    if config.scenario in ("stationary", "oscillatory"):
        return _embedded_setup(config)
    if config.scenario == "adiabatic":
        return _adiabatic_setup(config)
    return _physical_setup(config)


def _oracle_trajectory(setup, config):
    dt = config.out_every * config.dt
    params = two_mode.TwoModeParams(setup.params.j12)
    if setup.middle_interaction == 0.0:
        return two_mode.propagate(
            setup.middle_initial, params, config.t_end, dt,
            schedule=setup.schedule, rtol=ORACLE_RTOL)
    return two_mode.nonlinear_propagate(
        setup.middle_initial, params, setup.middle_interaction,
        config.t_end, dt, schedule=setup.schedule, rtol=ORACLE_RTOL)


def _oracle_deviation(record, oracle, j12):
    rows = min(len(record.times), len(oracle.times))
    if rows == 0:
        return 0.0
    states = oracle.states[:rows]
    n1 = np.abs(states[:, 0]) ** 2
    n2 = np.abs(states[:, 1]) ** 2
    j = -2.0 * j12 * (states[:, 0] * np.conj(states[:, 1])).imag
    dev_n1 = np.abs(record.populations[:rows, 1] - n1)
    dev_n2 = np.abs(record.populations[:rows, 2] - n2)
    dev_j = np.abs(record.currents[:rows, 1] - j)
    return float(max(dev_n1.max(), dev_n2.max(), dev_j.max()))


def _trap_series(record, context):
    """Outer-well depths and displacements reproducing the recorded controls."""
    s01 = context.signs[0] * context.signs[1]
    s23 = context.signs[2] * context.signs[3]
    rows = len(record.times)
    series = {key: np.zeros(rows) for key in ("V0", "V3", "delta0", "delta3")}
    for i in range(rows):
        targets = (context.offset + record.onsite[i, 0],
                   context.offset + record.onsite[i, 1],
                   s01 * record.tunneling[i, 0],
                   s23 * record.tunneling[i, 1])
        v0, v3, d0, d3 = physical_map.invert_trap_parameters(
            targets, context.trap, context.ansatz, context.constants,
            context.units)
        series["V0"][i] = v0
        series["V3"][i] = v3
        series["delta0"][i] = d0
        series["delta3"][i] = d3
    return series


@dataclass(frozen=True)
class RunResult:
    """Raw outcome of a run before tolerances are applied."""

    setup: RunSetup
    record: four_mode.TrajectoryRecord
    oracle: object
    oracle_deviation: float
    norm_drift: float
    trap_series: dict | None


def execute(config: ScenarioConfig) -> RunResult:
    """Run a configured scenario and the matching two-mode reference."""
    setup = prepare_run(config)
    rng = np.random.default_rng(config.seed)
    record = four_mode.run_trajectory(
        setup.initial, setup.schedule, setup.params, config.t_end, config.dt,
        out_every=config.out_every, reservoir_floor=config.reservoir_floor,
        noise_amplitude=config.perturbation, rng=rng)
    oracle = _oracle_trajectory(setup, config)
    deviation = _oracle_deviation(record, oracle, setup.params.j12)
    totals = record.populations.sum(axis=1)
    drift = float(np.abs(totals - totals[0]).max()) if len(totals) else 0.0
    series = None
    if setup.trap is not None:
        series = _trap_series(record, setup.trap)
    return RunResult(setup, record, oracle, deviation, drift, series)


def write_series(record, path, *, trap_series=None):
    """Write a trajectory record as CSV with 15 significant digits.

    One row per recorded time; an empty record produces the header only.
    Physical runs append the inverted trap columns.  Line endings are LF
    regardless of platform, so identical records give identical bytes.
    """
    header = "t,n0,n1,n2,n3,j01,j12,j23,E0,E3,J01,J23,Gamma,r1,r2,r3"
    if trap_series is not None:
        header += ",V0,V3,delta0,delta3"
    with open(path, "w", encoding="utf-8", newline="\n") as stream:
        stream.write(header + "\n")
        for i in range(len(record.times)):
            values = [record.times[i], *record.populations[i],
                      *record.currents[i], *record.onsite[i],
                      *record.tunneling[i], record.gamma[i],
                      *record.residuals[i]]
            if trap_series is not None:
                values += [trap_series[key][i]
                           for key in ("V0", "V3", "delta0", "delta3")]
            stream.write(",".join(format(v, ".15g") for v in values) + "\n")


def resolved_equivalence_tolerance(config):
    if config.equivalence_tolerance is not None:
        return config.equivalence_tolerance
    if config.scenario in ("stationary", "oscillatory"):
        if config.perturbation > 0.0:
            return 0.05
        if config.interaction == 0.0:
            return 1e-6
    return math.inf


@dataclass(frozen=True)
class RunReport:
    """Outcome summary of one configured run."""

    scenario: str
    exit_code: int
    status: str
    completed: bool
    termination_reason: str | None
    termination_time: float | None
    rows: int
    max_r1: float
    max_r2: float
    max_r3: float
    norm_drift: float
    oracle_deviation: float
    oracle_tolerance: float
    elapsed: float
    output: str | None
    failures: tuple

    def lines(self):
        out = [
            f"scenario            {self.scenario}",
            f"status              {self.status} (exit {self.exit_code})",
            f"rows                {self.rows}",
            f"max residuals       r1={self.max_r1:.3e} r2={self.max_r2:.3e} "
            f"r3={self.max_r3:.3e}",
            f"norm drift          {self.norm_drift:.3e}",
        ]
        if math.isfinite(self.oracle_tolerance):
            out.append(f"two-mode deviation  {self.oracle_deviation:.3e} "
                       f"(tolerance {self.oracle_tolerance:g})")
        else:
            out.append(f"two-mode deviation  {self.oracle_deviation:.3e}")
        if not self.completed:
            out.append(f"terminated at t={self.termination_time:g}: "
                       f"{self.termination_reason}")
        for failure in self.failures:
            out.append(f"tolerance failure   {failure}")
        if self.output is not None:
            out.append(f"output              {self.output}")
        out.append(f"elapsed             {self.elapsed:.2f} s")
        return out


def run_scenario(config: ScenarioConfig, out_dir=".") -> RunReport:
    """Execute a config, write its CSV and check the configured tolerances.

    Perturbed runs skip the condition-residual bound: the controller matrix
    elements are detuned on purpose, so only the norm-drift bound and the
    two-mode deviation (default 0.05) remain meaningful.
    """
    start = time.perf_counter()
    result = execute(config)
    record = result.record

    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / (config.output or f"{config.scenario}.csv")
    write_series(record, path, trap_series=result.trap_series)

    if len(record.times):
        max_r = record.max_residuals()
    else:
        max_r = np.zeros(3)
    failures = []
    if config.perturbation == 0.0:
        worst = max(max_r[0], max_r[1])
        if worst > config.residual_tolerance:
            failures.append(
                f"condition residuals {worst:.3e} exceed "
                f"{config.residual_tolerance:g}")
    if result.norm_drift > config.norm_tolerance:
        failures.append(f"norm drift {result.norm_drift:.3e} exceeds "
                        f"{config.norm_tolerance:g}")
    oracle_tol = resolved_equivalence_tolerance(config)
    if result.oracle_deviation > oracle_tol:
        failures.append(f"two-mode deviation {result.oracle_deviation:.3e} "
                        f"exceeds {oracle_tol:g}")

    if not record.completed:
        exit_code, status = 3, "numerical failure"
    elif failures:
        exit_code, status = 1, "tolerance failure"
    else:
        exit_code, status = 0, "ok"
    return RunReport(
        scenario=config.scenario, exit_code=exit_code, status=status,
        completed=record.completed,
        termination_reason=record.termination_reason,
        termination_time=record.termination_time,
        rows=len(record.times), max_r1=float(max_r[0]),
        max_r2=float(max_r[1]), max_r3=float(max_r[2]),
        norm_drift=result.norm_drift,
        oracle_deviation=result.oracle_deviation,
        oracle_tolerance=oracle_tol, elapsed=time.perf_counter() - start,
        output=str(path), failures=tuple(failures))


_SWEEPABLE = {
    key for key, conv in _CONVERTERS.items()
    if conv in (_number, _positive, _nonnegative, _negative)
}


def parse_sweep(text, config):
    """Expand ``key=a:b:n`` into configs with distinct output names."""
    key, sep, grid = text.partition("=")
    key = key.strip()
    parts = grid.split(":") if sep else []
    if len(parts) != 3:
        raise ConfigError(f"sweep {text!r}: expected key=a:b:n")
    if key not in _SWEEPABLE:
        raise ConfigError(f"sweep key {key!r} is not a numeric setting")
    if key not in _ALLOWED_KEYS[config.scenario]:
        raise ConfigError(f"sweep key {key!r} does not apply to "
                          f"the {config.scenario!r} scenario")
    try:
        lo, hi = float(parts[0]), float(parts[1])
        count = int(parts[2], 10)
    except ValueError:
        raise ConfigError(f"sweep {text!r}: expected key=a:b:n") from None
    if count < 1:
        raise ConfigError("sweep needs at least one point")
    base = Path(config.output or f"{config.scenario}.csv")
    configs = []
    for i, value in enumerate(np.linspace(lo, hi, count)):
        value = float(value)
        try:
            _CONVERTERS[key](repr(value))
        except ValueError as exc:
            raise ConfigError(f"sweep value {key}={value:g}: {exc}") from None
        name = f"{base.stem}_{key}_{i:02d}_{value:g}{base.suffix}"
        configs.append(replace(config, **{key: value},
                               output=str(base.with_name(name))))
    return configs


def _run_command(args):
    try:
        config = load_config(args.config)
        configs = ([config] if args.sweep is None
                   else parse_sweep(args.sweep, config))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    worst = 0
    for i, cfg in enumerate(configs):
        if i:
            print()
        try:
            report = run_scenario(cfg, args.out)
        except prepare.BrokenPhase as exc:
            print(f"error: gain/loss beyond the exceptional point: {exc}",
                  file=sys.stderr)
            return 2
        except (RuntimeError, four_mode.InitialConditionViolated) as exc:
            print(f"numerical failure: {exc}", file=sys.stderr)
            worst = max(worst, 3)
            continue
        for line in report.lines():
            print(line)
        worst = max(worst, report.exit_code)
    return worst


def _check_command(args):
    from . import acceptance

    only = None
    if args.only is not None:
        try:
            only = sorted({int(part, 10) for part in args.only.split(",")})
        except ValueError:
            print(f"error: --only expects comma-separated integers, "
                  f"got {args.only!r}", file=sys.stderr)
            return 2
    results = acceptance.run_all(only=only)
    return 0 if all(r.passed for r in results) else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="ptfourwell",
        description="Controlled four-well runs emulating balanced gain and "
                    "loss on the middle pair of wells.")
    commands = parser.add_subparsers(dest="command", required=True)
    runner = commands.add_parser(
        "run", help="execute a configured scenario and write its CSV series")
    runner.add_argument("--config", required=True,
                        help="path to a key = value config file")
    runner.add_argument("--out", default=".",
                        help="directory for output files (default: .)")
    runner.add_argument("--sweep", default=None, metavar="KEY=A:B:N",
                        help="repeat the run over a linear grid of one "
                             "numeric setting")
    checker = commands.add_parser(
        "check", help="run the built-in acceptance checks")
    checker.add_argument("--only", default=None, metavar="N,M,...",
                         help="restrict to the given criterion numbers")
    args = parser.parse_args(argv)
    if args.command == "run":
        return _run_command(args)
    return _check_command(args)


if __name__ == "__main__":
    sys.exit(main())
