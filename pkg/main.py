"""
covlab command-line entry point.

Runs Boolean-model coverage experiments described by INI experiment files and
writes reproducible CSV or JSON results.
"""
import logging
import sys
from pathlib import Path
from typing import Optional

import click
from dotenv import load_dotenv
from pydantic import ValidationError

from src.api.harness import ExperimentConfig, load_config, list_experiments, render, run, validate
from src.utils.config import EXIT_CODES, CoverageLabError, SpecValidationError
from src.utils.utils import setup_logging

load_dotenv()

logger = logging.getLogger(__name__)


def _validation_message(exc: Exception) -> str:
    """Name the offending field of a validation failure."""
    if isinstance(exc, ValidationError):
        first = exc.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or "config"
        return f"{field}: {first['msg']}"
    return str(exc)


def _load(config_path: str, **overrides) -> ExperimentConfig:
    try:
        return load_config(Path(config_path), overrides)
    except (ValidationError, SpecValidationError) as exc:
        click.echo(f"Invalid configuration: {_validation_message(exc)}", err=True)
        sys.exit(EXIT_CODES["validation_error"])


@click.group()
@click.option("--log-level", default=None, help="Logging level (default: COVLAB_LOG_LEVEL or INFO)")
def cli(log_level: Optional[str]) -> None:
    """Boolean-model coverage laboratory."""
    setup_logging(log_level)


@cli.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override [experiment] seed")
@click.option("--replicates", type=int, default=None, help="Override [experiment] replicates")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Override [experiment] out")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None, help="Override [experiment] format")
def run_command(config_path: str, seed: Optional[int], replicates: Optional[int], out: Optional[str],
                fmt: Optional[str]) -> None:
    """Run the experiment in CONFIG and write its results."""
    config = _load(config_path, seed=seed, replicates=replicates, out=out, format=fmt)
    try:
        result = run(config)
    except (ValidationError, SpecValidationError) as exc:
        click.echo(f"Invalid configuration: {_validation_message(exc)}", err=True)
        sys.exit(EXIT_CODES["validation_error"])
    except (CoverageLabError, ArithmeticError, OSError, RuntimeError, ValueError) as exc:
        logger.error(f"Experiment failed: {exc}")
        sys.exit(EXIT_CODES["runtime_error"])

    if not config.experiment.out:
        click.echo(render(result, config.experiment.format), nl=False)
    sys.exit(EXIT_CODES["ok"])


@cli.command("validate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
def validate_command(config_path: str) -> None:
    """Check CONFIG without running it."""
    config = _load(config_path)
    try:
        validate(config)
    except (ValidationError, SpecValidationError) as exc:
        click.echo(f"Invalid configuration: {_validation_message(exc)}", err=True)
        sys.exit(EXIT_CODES["validation_error"])
    click.echo(f"{config.experiment.kind}: ok")


@cli.command("list-experiments")
def list_experiments_command() -> None:
    """List the experiment kinds."""
    for kind, description in list_experiments():
        click.echo(f"{kind:<20} {description}")


if __name__ == "__main__":
    cli()
