import functools
import logging
import logging.config
import typing
from dataclasses import dataclass, fields

import click
import numpy as np
import yaml

from bilocaltk.exceptions import BilocalToolkitException, ConfigurationError
from bilocaltk.inequalities import predicted_curves, thresholds
from bilocaltk.lhv import (
    fit_bilocal,
    maximize_b_bilocal,
    maximize_b_local,
    sample_b_values,
)
from bilocaltk.measurements import ScenarioName
from bilocaltk.sampler import DEFAULT_BOOTSTRAP_ROUNDS, simulated_sweep, synthetic_experiment
from bilocaltk.scenario import Scenario, counterexample_prediction, exact_prediction, get_scenario
from bilocaltk.util import ATOL_DERIVED, check_range, dumps_csv, dumps_json

logger = logging.getLogger(__name__)

scenarios = Scenario.config_mapping()

OUTPUT_FORMATS = ("csv", "json")
SWEEP_HEADER = ("v", "B14", "B13", "CHSH", "nonbilocal_14", "nonbilocal_13", "nonlocal")
SIMULATED_SWEEP_HEADER = ("v", "predicted", "value", "sigma", "low", "high")

# config file section → (key in the file, RunConfig field)
CONFIG_SECTIONS = {
    "network": [
        ("scenario", "scenario"),
        ("v1", "v1"),
        ("v2", "v2"),
        ("vb", "v_b"),
        ("trials", "trials"),
        ("seed", "seed"),
        ("bootstrap_rounds", "bootstrap_rounds"),
        ("v_target", "v_target"),
    ],
    "lhv": [
        ("k", "k"),
        ("k1", "k1"),
        ("k2", "k2"),
        ("restarts", "restarts"),
        ("iterations", "iterations"),
        ("workers", "workers"),
    ],
    "output": [("format", "output_format"), ("path", "output")],
}


def load_config(config_file):
    try:
        with open(config_file, "r") as stream:
            config = yaml.safe_load(stream) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"{config_file} is not valid YAML: {str(e).splitlines()[0]}")

    if not isinstance(config, dict):
        raise ConfigurationError(f"{config_file} must contain a mapping of sections, got {type(config).__name__}")

    if logging_section := config.get("logging"):
        logging.config.dictConfig(logging_section)

    return config


def _coerce(name: str, value, kind: type):
    try:
        if isinstance(value, bool):
            raise ValueError
        if kind is float:
            return float(value)
        if isinstance(value, (int, np.integer)):
            return int(value)
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, str):
            return int(value.strip())
        raise ValueError
    except (TypeError, ValueError):
        expected = "a number" if kind is float else "an integer"
        raise ConfigurationError(f"{name} must be {expected}, got {value!r}")


@dataclass(frozen=True)
class RunConfig:
    """Merged settings of one command: built-in defaults, then the config file, then flags."""

    command: str
    scenario: str = ScenarioName.FOURTEEN.value
    v1: float = 1.0
    v2: float = 1.0
    v_b: float = 1.0
    trials: int = 100000
    seed: typing.Optional[int] = None
    v_target: typing.Optional[float] = None
    bootstrap_rounds: int = DEFAULT_BOOTSTRAP_ROUNDS
    output: typing.Optional[str] = None
    output_format: str = "json"
    k: typing.Optional[int] = None
    k1: typing.Optional[int] = None
    k2: typing.Optional[int] = None
    restarts: typing.Optional[int] = None
    iterations: int = 200
    workers: int = 1

    _NUMERIC: typing.ClassVar[typing.Dict[str, type]] = {
        "v1": float,
        "v2": float,
        "v_b": float,
        "v_target": float,
        "trials": int,
        "seed": int,
        "bootstrap_rounds": int,
        "k": int,
        "k1": int,
        "k2": int,
        "restarts": int,
        "iterations": int,
        "workers": int,
    }

    def __post_init__(self):
        for name, kind in self._NUMERIC.items():
            if (value := getattr(self, name)) is not None:
                object.__setattr__(self, name, _coerce(name, value, kind))

        object.__setattr__(self, "scenario", get_scenario(self.scenario).config_name)
        for name in ("v1", "v2", "v_b"):
            object.__setattr__(self, name, check_range(getattr(self, name), name))
        if self.v_target is not None:
            object.__setattr__(self, "v_target", check_range(self.v_target, "v_target"))
        if self.output_format not in OUTPUT_FORMATS:
            raise click.UsageError(f"Unknown output format '{self.output_format}'. Valid options: csv, json.")
        for name in ("trials", "iterations", "workers", "k", "k1", "k2", "restarts"):
            if (value := getattr(self, name)) is not None and int(value) < 1:
                raise click.UsageError(f"{name} must be at least 1, got {value}")

    @property
    def v_effective(self) -> float:
        return self.v1 * self.v2 * self.v_b

    @classmethod
    def from_sources(cls, command: str, config: dict, **flags) -> "RunConfig":
        """Merges the config file sections with the command line flags that were given."""
        values = {}
        for section, keys in CONFIG_SECTIONS.items():
            if type(entries := config.get(section)) is not dict:
                continue
            for key, field in keys:
                if key in entries:
                    values[field] = entries[key]

        known = {field.name for field in fields(cls)}
        values.update({name: value for name, value in flags.items() if value is not None and name in known})
        return cls(command=command, **values)


def usage_errors(f):
    """Reports toolkit exceptions as usage errors (exit code 2, one line)."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except BilocalToolkitException as e:
            raise click.UsageError(str(e))

    return wrapper


def emit(run_config: RunConfig, report: dict, header=None, rows=None):
    """Writes a report as JSON or, if *header* and *rows* are given, as CSV."""
    if run_config.output_format == "csv":
        if header is None:
            header, rows = list(report.keys()), [list(report.values())]
        text = dumps_csv(header, rows)
    else:
        text = dumps_json(report)

    if run_config.output:
        with open(run_config.output, "w", newline="\n") as stream:
            stream.write(text)
        logger.info("Wrote %s report to %s", run_config.output_format, run_config.output)
    else:
        click.echo(text, nl=False)


def scenario_option(f):
    return click.option(
        "--scenario",
        "-s",
        type=click.Choice(list(scenarios.keys()), case_sensitive=False),
        help="Measurement scenario.",
    )(f)


def output_options(f):
    f = click.option("--output", "-o", type=click.Path(dir_okay=False), help="Write the report to this file.")(f)
    return click.option(
        "--format", "output_format", type=click.Choice(OUTPUT_FORMATS, case_sensitive=False), help="Report format."
    )(f)


def visibility_options(f):
    f = click.option("--vb", "v_b", type=click.FLOAT, help="Visibility of Bob's measurement.")(f)
    f = click.option("--v2", type=click.FLOAT, help="Visibility of source S₂.")(f)
    return click.option("--v1", type=click.FLOAT, help="Visibility of source S₁.")(f)


@click.group()
@click.option("--config-file", type=click.Path(exists=True, dir_okay=False), help="YAML configuration file.")
@click.option("--verbose", "-v", is_flag=True, help="Log progress messages.")
@click.pass_context
@usage_errors
def main(ctx, config_file, verbose):
    config = load_config(config_file) if config_file else {}
    if "logging" not in config:
        logging.basicConfig(level=logging.INFO if verbose else logging.WARNING)
    ctx.obj = config


@main.command("scenarios")
def list_scenarios():
    """Lists the available scenarios and their visibility thresholds."""
    limits = thresholds()
    for config_name, scenario in scenarios.items():
        click.echo(f"{scenario.__name__} ({config_name}): violated for v > {limits[config_name]:.6f}")


@main.command()
@scenario_option
@visibility_options
@output_options
@click.pass_obj
@usage_errors
def predict(config, **flags):
    """Computes I, J, B and CHSH of the exact network with Werner sources."""
    run_config = RunConfig.from_sources("predict", config, **flags)
    prediction = exact_prediction(run_config.scenario, run_config.v1, run_config.v2, run_config.v_b)
    emit(run_config, prediction.as_dict())


def sweep_rows(v_min: float, v_max: float, steps: int) -> typing.List[list]:
    """Closed-form curves on an even grid, with the region flags B > 1 and CHSH > 2."""
    rows = []
    for v in np.linspace(v_min, v_max, steps):
        b14, b13, s = predicted_curves(v)
        rows.append(
            [float(v), b14, b13, s, b14 > 1 + ATOL_DERIVED, b13 > 1 + ATOL_DERIVED, s > 2 + ATOL_DERIVED]
        )
    return rows


@main.command()
@scenario_option
@visibility_options
@click.option("--v-min", type=click.FLOAT, default=0.0, show_default=True)
@click.option("--v-max", type=click.FLOAT, help="Upper end of the grid. Default: 1, or v1·v2·vb with --simulate.")
@click.option("--steps", type=click.INT, default=101, show_default=True)
@click.option("--simulate", is_flag=True, help="Estimate each point from a synthetic experiment with flip noise.")
@click.option("--trials", "-n", type=click.INT, help="Trials per setting of each simulated point.")
@click.option("--seed", type=click.INT, help="Seed of all random streams.")
@click.option("--bootstrap-rounds", type=click.INT)
@output_options
@click.pass_obj
@usage_errors
def sweep(config, v_min, v_max, steps, simulate, **flags):
    """Tabulates B₁₄, B₁₃ and CHSH against the overall visibility v.

    With --simulate, the network runs at v1·v2·vb and every grid point is reached by flipping
    Alice's outcomes; the table then holds estimates with their one-sigma bands.
    """
    # sweeps default to CSV unless the config file chooses otherwise
    output_section = config.get("output") if isinstance(config.get("output"), dict) else {}
    run_config = RunConfig.from_sources("sweep", {**config, "output": {"format": "csv", **output_section}}, **flags)
    if v_max is None:
        v_max = run_config.v_effective if simulate else 1.0
    check_range(v_min, "v_min")
    check_range(v_max, "v_max", 0.0, run_config.v_effective if simulate else 1.0)
    if v_min >= v_max or steps < 2:
        raise click.UsageError(f"Need v_min < v_max and at least 2 steps, got [{v_min}, {v_max}] in {steps}")

    if not simulate:
        rows = sweep_rows(v_min, v_max, steps)
        emit(run_config, {"rows": [dict(zip(SWEEP_HEADER, row)) for row in rows]}, SWEEP_HEADER, rows)
        return

    seed, reports = simulated_sweep(
        run_config.scenario,
        np.linspace(v_min, v_max, steps),
        run_config.trials,
        seed=run_config.seed,
        v1=run_config.v1,
        v2=run_config.v2,
        v_b=run_config.v_b,
        bootstrap_rounds=run_config.bootstrap_rounds,
    )
    rows = simulated_sweep_rows(reports)
    emit(
        run_config,
        {
            "scenario": run_config.scenario,
            "seed": seed,
            "trials_per_setting": run_config.trials,
            "v_max": run_config.v_effective,
            "rows": [dict(zip(SIMULATED_SWEEP_HEADER, row)) for row in rows],
        },
        SIMULATED_SWEEP_HEADER,
        rows,
    )


def simulated_sweep_rows(reports) -> typing.List[list]:
    """One row per report: the target visibility, the predicted value and the estimates with ±1σ bands."""
    rows = []
    for report in reports:
        value, sigma = report.b_hat, report.b_sigma
        if report.scenario == ScenarioName.CHSH.value:
            value, sigma = report.chsh_hat, report.chsh_sigma
        rows.append(
            [
                report.extra["v_target"],
                report.extra["predicted"],
                value,
                sigma,
                None if sigma is None else value - sigma,
                None if sigma is None else value + sigma,
            ]
        )
    return rows


@main.command()
@scenario_option
@visibility_options
@click.option("--v-target", type=click.FLOAT, help="Visibility after flip noise; defaults to v1·v2·vb.")
@click.option("--trials", "-n", type=click.INT, help="Trials per setting.")
@click.option("--seed", type=click.INT, help="Seed of all random streams.")
@click.option("--bootstrap-rounds", type=click.INT)
@click.option("--symmetrize", is_flag=True, help="Relabel half of the events to cancel detector bias.")
@output_options
@click.pass_obj
@usage_errors
def experiment(config, symmetrize, **flags):
    """Runs a synthetic experiment: exact network, counts, flip noise and bootstrap estimate."""
    run_config = RunConfig.from_sources("experiment", config, **flags)
    report = synthetic_experiment(
        run_config.scenario,
        run_config.trials,
        seed=run_config.seed,
        v1=run_config.v1,
        v2=run_config.v2,
        v_b=run_config.v_b,
        v_target=run_config.v_target,
        bootstrap_rounds=run_config.bootstrap_rounds,
        symmetrized=symmetrize,
    )
    emit(run_config, {**report.as_dict(), "v1": run_config.v1, "v2": run_config.v2, "vb": run_config.v_b})


@main.command()
@output_options
@click.pass_obj
@usage_errors
def counterexample(config, **flags):
    """Evaluates the separable-measurement construction that violates both bilocal inequalities."""
    run_config = RunConfig.from_sources("counterexample", config, **flags)
    report = counterexample_prediction().as_dict()
    if run_config.output_format == "csv":
        header = ["I14", "J14", "I13", "J13", "B14", "B13", "separable"]
        emit(run_config, report, header, [[report[key] for key in header]])
    else:
        emit(run_config, report)


@main.command()
@scenario_option
@click.option("--maximize", type=click.Choice(["bilocal", "local"], case_sensitive=False))
@click.option("--fit", is_flag=True, help="Fit a bilocal model to the exact network at visibility --v.")
@click.option("--sample", type=click.INT, help="Evaluate B on this many random bilocal models.")
@click.option("--v", "v", type=click.FLOAT, default=0.45, show_default=True, help="Target visibility of --fit.")
@click.option("--k", type=click.INT, help="Hidden-variable cardinality of local models.")
@click.option("--k1", type=click.INT, help="Cardinality of λ₁.")
@click.option("--k2", type=click.INT, help="Cardinality of λ₂.")
@click.option("--restarts", type=click.INT)
@click.option("--iterations", type=click.INT)
@click.option("--workers", type=click.INT, help="Threads running restarts concurrently.")
@click.option("--seed", type=click.INT)
@output_options
@click.pass_obj
@usage_errors
def lhv(config, maximize, fit, sample, v, **flags):
    """Searches, fits or samples hidden-variable models."""
    if sum([maximize is not None, fit, sample is not None]) != 1:
        raise click.UsageError("Pass exactly one of --maximize, --fit and --sample.")
    run_config = RunConfig.from_sources("lhv", config, **flags)
    common = {"iterations": run_config.iterations, "seed": run_config.seed, "workers": run_config.workers}

    if maximize == "bilocal":
        model, best_b = maximize_b_bilocal(
            run_config.scenario, run_config.k1 or 4, run_config.k2 or 4, run_config.restarts or 64, **common
        )
        report = {"mode": "maximize-bilocal", "scenario": run_config.scenario, "best_b": best_b}
    elif maximize == "local":
        model, best_b = maximize_b_local(run_config.scenario, run_config.k or 8, run_config.restarts or 64, **common)
        report = {"mode": "maximize-local", "scenario": run_config.scenario, "best_b": best_b}
    elif fit:
        target = exact_prediction(run_config.scenario, check_range(v, "v")).distribution
        model, distance = fit_bilocal(
            target, run_config.k1 or 8, run_config.k2 or 8, run_config.restarts or 4, **common
        )
        report = {"mode": "fit", "scenario": run_config.scenario, "v": v, "l2_distance": distance}
    else:
        if sample < 1:
            raise click.UsageError(f"--sample must be at least 1, got {sample}")
        values = sample_b_values(
            np.random.default_rng(run_config.seed),
            sample,
            run_config.k1 or 4,
            run_config.k2 or 4,
            get_scenario(run_config.scenario).b_arity,
        )
        report = {
            "mode": "sample",
            "scenario": run_config.scenario,
            "samples": sample,
            "max_b": float(values.max()),
            "mean_b": float(values.mean()),
            "above_bound": int((values > 1 + ATOL_DERIVED).sum()),
        }
        model = None

    if run_config.output_format == "csv" or model is None:
        emit(run_config, report)
    else:
        emit(run_config, {**report, "model": model.as_dict()})


if __name__ == "__main__":
    main()
