"""Command line entry point.

Example:
    themekg --config fixtures/evb_mini/config.toml --run-dir /tmp/evb \\
        --stage all --mock-providers
"""

from __future__ import annotations

import logging
import sys

import click

from .config import ConfigError, load_config
from .pipeline import STAGES, PipelineError, Runner, build_providers
from .providers import ProviderError


@click.command(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="TOML or JSON pipeline configuration.")
@click.option("--stage", default="all", show_default=True,
              type=click.Choice(STAGES + ("all",)),
              help="Pipeline stage to run.")
@click.option("--run-dir", required=True, type=click.Path(file_okay=False),
              help="Directory receiving stage artifacts and the manifest.")
@click.option("--force", is_flag=True,
              help="Re-run the stage even if its artifacts already exist.")
@click.option("--mock-providers", is_flag=True,
              help="Use the deterministic offline providers regardless of config.")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(config_path: str, stage: str, run_dir: str, force: bool,
         mock_providers: bool, verbose: bool) -> None:
    """Build and evaluate a theme-specific knowledge graph."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(config_path, force_mock=mock_providers)
        bundle, cache = build_providers(cfg)
        runner = Runner(cfg=cfg, run_dir=run_dir, bundle=bundle, cache=cache,
                        force=force)
        runner.run(stage)
    except (ConfigError, PipelineError, ProviderError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
