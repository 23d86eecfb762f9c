# main.py
import logging
import sys
from pathlib import Path
from typing import Callable, Optional, Tuple

import click

import handlers
from errors import ConfigError, SemError
from log_config import configure_logging
from schemas import RunConfig, load_config

logger = logging.getLogger("main")

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _execute(command: str, config_path: Optional[Path], out_dir: Optional[Path], overrides: Tuple[str, ...],
             log_level: Optional[str]) -> None:
    """Loads the config, sets up logging in the output directory and runs one handler."""
    try:
        config: RunConfig = load_config(config_path, overrides)
    except ConfigError as exc:
        click.echo(f"Configuration error: {exc}", err=True)
        for path in exc.key_paths:
            click.echo(f"  at {path}", err=True)
        sys.exit(EXIT_CONFIG)

    out_dir = Path(out_dir) if out_dir else config.output.directory
    out_dir.mkdir(parents=True, exist_ok=True)
    configure_logging(log_level or config.output.log_level, json_path=out_dir / "run.log.jsonl")
    handler: Callable = handlers.HANDLERS[command]
    logger.info("Running '%s' with output in %s", command, out_dir)
    try:
        summary = handler(config, out_dir)
    except SemError as exc:
        logger.error("'%s' aborted: %s", command, exc)
        sys.exit(EXIT_NUMERICAL)
    logger.info("'%s' finished: %s", command, ", ".join(summary.outputs))


def _common_options(func):
    func = click.option("--log-level", default=None,
                        type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
                        help="Overrides output.log_level.")(func)
    func = click.option("--override", "overrides", multiple=True, metavar="SECTION.KEY=VALUE",
                        help="Patch one configuration value; repeatable.")(func)
    func = click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None,
                        help="Output directory (default: output.directory).")(func)
    func = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
                        default=None, help="TOML or JSON run configuration.")(func)
    return func


@click.group()
def cli():
    """Pseudo-impulsive radiation solver and its numerical studies."""


@cli.command()
@_common_options
def radiate(config_path, out_dir, overrides, log_level):
    """Radiation run: signals.csv, coefficients.csv and run.json."""
    _execute("radiate", config_path, out_dir, overrides, log_level)


@cli.command()
@_common_options
def mms(config_path, out_dir, overrides, log_level):
    """Manufactured-solution convergence over the mesh family and orders."""
    _execute("mms", config_path, out_dir, overrides, log_level)


@cli.command()
@_common_options
def stability(config_path, out_dir, overrides, log_level):
    """Eigenvalues of the semi-discrete free-surface operator per order."""
    _execute("stability", config_path, out_dir, overrides, log_level)


@cli.command()
@_common_options
def scaling(config_path, out_dir, overrides, log_level):
    """Median solve time against N_dof and the fitted exponent."""
    _execute("scaling", config_path, out_dir, overrides, log_level)


@cli.command()
@_common_options
def spurious(config_path, out_dir, overrides, log_level):
    """Alpha or beta sweep with free-surface spectra at the waterline."""
    _execute("spurious", config_path, out_dir, overrides, log_level)


@cli.command()
@_common_options
def meshgen(config_path, out_dir, overrides, log_level):
    """Writes the configured mesh in the ASCII exchange format."""
    _execute("meshgen", config_path, out_dir, overrides, log_level)


if __name__ == "__main__":
    cli()
