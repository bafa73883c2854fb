from __future__ import annotations

import asyncio
import functools
import logging
import sys
from pathlib import Path
from typing import Any

import click

from misspec_lab.core.config import OUT_ENV, load_config
from misspec_lab.core.errors import ConfigError

# Import experiment modules to trigger registration
import misspec_lab.experiments.bandit  # noqa: F401
import misspec_lab.experiments.design  # noqa: F401
import misspec_lab.experiments.hardness  # noqa: F401
import misspec_lab.experiments.query  # noqa: F401
import misspec_lab.experiments.rl  # noqa: F401

from misspec_lab.experiments import EXPERIMENT_REGISTRY

logger = logging.getLogger("misspec_lab")

EXIT_CONFIG = 2
EXIT_RUNTIME = 3

PRESETS = ["realizable", "misspecified", "lower_bound", "failure", "contextual"]


def common_options(fn):
    """--config, --seed, --jobs, --out and --no-plots, shared by every subcommand."""

    @click.option("--config", "config_path", type=click.Path(dir_okay=False), help="TOML or JSON config file")
    @click.option("--seed", type=int, default=None, help="Root seed (default 0)")
    @click.option("--jobs", "-j", type=int, default=None, help="Cells run concurrently (default 1)")
    @click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
                  help=f"Run directory (default ${OUT_ENV}/<name>-seed<N>-<id>, or runs/...)")
    @click.option("--no-plots", is_flag=True, help="Skip PNG plots")
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        return fn(*args, **kwargs)

    return wrapper


def _run(name: str, config_path: str | None, overrides: dict[str, Any]) -> None:
    experiment_cls = EXPERIMENT_REGISTRY[name]
    try:
        config = load_config(experiment_cls.config_cls, name, config_path, overrides)
    except ConfigError as exc:
        click.echo(f"Error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    experiment = experiment_cls(config)
    click.echo(f"Running {name} -> {experiment.out_dir}")
    try:
        summary = asyncio.run(experiment.run())
    except Exception as exc:
        logger.debug("run failed", exc_info=True)
        click.echo(f"Error: {name} run failed: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)

    click.echo(f"\n{name} complete. {summary.total_cells - summary.failed_cells}/{summary.total_cells} cells ok.")
    for f in summary.files:
        click.echo(f"  {summary.out_dir / f}")
    if summary.failed_cells:
        click.echo(f"  {summary.failed_cells} failed cells are marked in the tables and in run.txt")


def _overrides(seed: int | None, jobs: int | None, out_dir: str | None, no_plots: bool) -> dict[str, Any]:
    return {
        "seed": seed,
        "jobs": jobs,
        "out_dir": Path(out_dir) if out_dir else None,
        "plots": False if no_plots else None,
    }


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
def cli(verbose: bool):
    """misspec-lab - learning with misspecified linear features."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@common_options
def design(config_path, seed, jobs, out_dir, no_plots):
    """Frank–Wolfe optimal designs with their certificates."""
    _run("design", config_path, _overrides(seed, jobs, out_dir, no_plots))


@cli.command()
@common_options
@click.option("--preset", type=click.Choice(PRESETS), default=None, help="Instance family")
def bandit(config_path, seed, jobs, out_dir, no_plots, preset):
    """Regret sweeps of phased elimination and LinUCB."""
    _run("bandit", config_path, {**_overrides(seed, jobs, out_dir, no_plots), "preset": preset})


@cli.command()
@common_options
def rl(config_path, seed, jobs, out_dir, no_plots):
    """Approximate policy iteration on a design core set."""
    _run("rl", config_path, _overrides(seed, jobs, out_dir, no_plots))


@cli.command()
@common_options
def query(config_path, seed, jobs, out_dir, no_plots):
    """Query-game tables: needle counts, λ_q, design-learner errors."""
    _run("query", config_path, _overrides(seed, jobs, out_dir, no_plots))


@cli.command()
@common_options
def hardness(config_path, seed, jobs, out_dir, no_plots):
    """Hard-instance action counts and JL certificates."""
    _run("hardness", config_path, _overrides(seed, jobs, out_dir, no_plots))
