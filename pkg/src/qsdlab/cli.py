from __future__ import annotations

import sys
from types import SimpleNamespace

import click
from rich.console import Console

from .config import load_config
from .errors import ConfigError, ModelError, NumericalError
from .experiments import EXPERIMENTS, run_experiment
from .reporting import checks_table, write_outputs
from .utils.logging import get_logger, setup_logging

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def list_experiments() -> str:
    """One line per experiment: name, topic and description."""
    width = max(len(name) for name in EXPERIMENTS)
    return "\n".join(
        f"{name.ljust(width)}  {exp.topic} — {exp.description}" for name, exp in sorted(EXPERIMENTS.items())
    )


def main(**kwargs) -> int:
    args = SimpleNamespace(**kwargs)
    setup_logging(
        log_level=args.log_level,
        log_file=getattr(args, "log_file", None),
        logs_dir=getattr(args, "logs_dir", None),
    )
    logger = get_logger("cli")
    logger.info(f"Starting with args: {args}")
    console = Console(stderr=True)

    try:
        config = load_config(args.config).with_overrides(
            output_dir=args.output_dir, seed=args.seed_override, threads=args.threads
        )
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        console.print(f"[red]config error:[/red] {e}")
        return EXIT_CONFIG

    try:
        result = run_experiment(config)
    except (ConfigError, ModelError) as e:
        logger.error(f"Invalid configuration: {e}")
        console.print(f"[red]config error:[/red] {e}")
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}; diagnostics={e.diagnostics}")
        console.print(f"[red]numerical error:[/red] {e}")
        if e.diagnostics:
            console.print(e.diagnostics)
        return EXIT_NUMERICAL
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        raise

    written = write_outputs(result, config)
    console.print(checks_table(result))
    for kind, path in written.items():
        console.print(f"{kind}: {path}")
    if not result.passed:
        names = ", ".join(c.name for c in result.failed_checks)
        logger.warning(f"Experiment {config.experiment!r} failed checks: {names}")
        return EXIT_CHECKS_FAILED
    return EXIT_OK


def _shared_options(func):
    """Decorator for logging options common to all commands."""

    func = click.option(
        "--log-level",
        default="INFO",
        show_default=True,
        type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]),
        help="Logging verbosity",
    )(func)

    func = click.option(
        "--log-file",
        type=click.Path(path_type=str, dir_okay=False, writable=True),
        help="Path to the rotating log file (defaults to ~/.qsdlab/logs/qsdlab.log)",
    )(func)

    func = click.option(
        "--logs-dir",
        type=click.Path(path_type=str, file_okay=False, writable=True),
        help="Directory for log files (overrides default cache directory)",
    )(func)

    return func


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli() -> None:
    """Run quantum state diffusion experiments and write CSV/JSON artifacts."""


@cli.command("run")
@click.argument("config", type=click.Path(path_type=str, dir_okay=False))
@click.option(
    "--output-dir",
    type=click.Path(path_type=str, file_okay=False, writable=True),
    default=None,
    help="Directory for series.csv, field_*.csv and report.json (overrides [output].directory)",
)
@click.option(
    "--seed-override",
    type=int,
    default=None,
    help="Replace integration.base_seed",
)
@click.option(
    "--threads",
    type=click.IntRange(min=1),
    default=None,
    envvar="QSDLAB_THREADS",
    show_envvar=True,
    help="Worker processes for trajectory and kernel fan-out (results do not depend on it)",
)
@_shared_options
def run(config: str, **kwargs) -> None:
    """Run the experiment described by CONFIG (a TOML file)."""
    sys.exit(main(config=config, **kwargs))


@cli.command("list")
def list_command() -> None:
    """List the available experiments."""
    click.echo(list_experiments())


if __name__ == "__main__":
    cli()
