"""Command line entry point: ``simulate CONFIG_FILE [--mode M] [--out DIR]``."""

import logging
import sys

import click

from dvrgme import settings
from tunneling.exceptions import ConfigError, SimulationError
from tunneling.forms import parse_config
from tunneling.models import MODES
from tunneling.sweeps import run_sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


@click.command()
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", "mode", default=None, help=f"Override the configured mode ({', '.join(MODES)}).")
@click.option("--out", "output_dir", default=None, type=click.Path(file_okay=False), help="Output directory.")
def simulate(config_file, mode, output_dir):
    """Run the simulation described by CONFIG_FILE and write its CSV output."""
    settings.configure_logging()
    with open(config_file, "r") as f:
        text = f.read()

    try:
        cfg = parse_config(text, overrides={"mode": mode, "output_dir": output_dir})
    except ConfigError as exc:
        for message in exc.messages:
            click.echo(f"{config_file}: {message}", err=True)
        sys.exit(EXIT_CONFIG)

    try:
        result = run_sweep(cfg, config_path=config_file)
    except ConfigError as exc:
        # parameters that only fail once the spectrum or the step grid is known
        for message in exc.messages:
            click.echo(f"{config_file}: {message}", err=True)
        sys.exit(EXIT_CONFIG)
    except SimulationError as exc:
        logger.error(f"{cfg.mode} run failed: {exc}")
        sys.exit(EXIT_NUMERICAL)

    click.echo(result.path)
    sys.exit(EXIT_OK)


def main():
    simulate()


if __name__ == "__main__":
    main()
