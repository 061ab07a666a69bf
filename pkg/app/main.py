# app/main.py
"""Command-line entry point: python -m app.main <run|batch|plot-data|validate> ..."""
import dataclasses
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import click
import pandas as pd

from .config_loader import (ScenarioConfig, Strategy, get_output_root, load_global_config, load_scenario,
                            parse_comm_range)
from .data_processor import ResultProcessor
from .engine import ScenarioResult, run_scenario
from .errors import CoverageSimError
from .output_generator import PLOT_KINDS, OutputGenerator, emit_plot_data

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_WATCHDOG = 2


def apply_overrides(config: ScenarioConfig, strategy: Optional[str] = None, seed: Optional[int] = None,
                    comm_range: Optional[str] = None) -> ScenarioConfig:
    changes = {}
    if strategy is not None:
        changes["strategy"] = Strategy.parse(strategy)
    if seed is not None:
        changes["seed"] = seed
    if comm_range is not None:
        changes["comm_range"] = parse_comm_range(comm_range)
    return dataclasses.replace(config, **changes) if changes else config


def _run_job(job: Tuple[ScenarioConfig, Path]) -> ScenarioResult:
    config, out_root = job
    result, log = run_scenario(config)
    OutputGenerator(out_root).write_run(config, result, log)
    return result


def run_batch(configs: Sequence[ScenarioConfig], strategies: Sequence[Strategy], repeats: int,
              seed_base: int, out_root: Path, workers: int = 1) -> Tuple[pd.DataFrame, List[ScenarioResult]]:
    """
    Runs every (scenario, strategy, seed_base + r) combination, writes each run
    directory plus the batch summary, and returns the summary table.
    """
    if repeats < 1:
        raise click.BadParameter("repeats must be at least 1", param_hint="--repeats")
    out_root = Path(out_root)
    jobs = [(dataclasses.replace(cfg, strategy=strategy, seed=seed_base + r), out_root)
            for cfg in configs for strategy in strategies for r in range(repeats)]

    output = OutputGenerator(out_root)
    for cfg, _ in jobs:
        output.check_run_dir(cfg.name, cfg.strategy.value, cfg.seed)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = []
        for k, job in enumerate(jobs, start=1):
            cfg = job[0]
            click.echo(f"  [{k}/{len(jobs)}] {cfg.name} / {cfg.strategy.value} / seed {cfg.seed}")
            results.append(_run_job(job))

    processor = ResultProcessor(results)
    summary = processor.summary_table()
    reductions = processor.reductions()
    aggregates = summary[summary["row_type"] == "aggregate"]
    output.write_batch(summary, reductions, {
        "n_runs": len(results),
        "scenarios": sorted({cfg.name for cfg in configs}),
        "strategies": [s.value for s in strategies],
        "seed_base": seed_base,
        "repeats": repeats,
        "aborted": [r.summary_row() for r in results if r.aborted],
        "aggregates": aggregates.to_dict("records"),
        "reductions": reductions.to_dict("records"),
    })
    return summary, results


@click.group()
@click.option("--verbose", is_flag=True, help="Log at DEBUG level.")
def cli(verbose: bool):
    """Multi-robot dynamic coverage simulator."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.option("--scenario", "scenario_ref", required=True, help="Scenario YAML file or preset name.")
@click.option("--strategy", default=None, type=click.Choice([s.value for s in Strategy]),
              help="Overrides the scenario's strategy.")
@click.option("--seed", type=int, default=None, help="Overrides the scenario's seed.")
@click.option("--comm-range", default=None, help="Communication range in meters, or 'unlimited'.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Output root (default: MDCPP_OUTPUT_DIR or ./runs).")
def run(scenario_ref: str, strategy: Optional[str], seed: Optional[int], comm_range: Optional[str],
        out_dir: Optional[Path]):
    """Run one scenario with one strategy."""
    try:
        click.echo("[Phase 1/3] Loading scenario...")
        global_config = load_global_config()
        config = apply_overrides(load_scenario(scenario_ref, global_config), strategy, seed, comm_range)
        output = OutputGenerator(out_dir or get_output_root(global_config))
        output.check_run_dir(config.name, config.strategy.value, config.seed)

        click.echo(f"[Phase 2/3] Simulating {config.name} with {config.strategy.value} (seed {config.seed})...")
        result, log = run_scenario(config)

        click.echo("[Phase 3/3] Writing outputs...")
        run_dir = output.write_run(config, result, log)
    except (CoverageSimError, OSError) as e:
        logger.error("%s", e)
        sys.exit(EXIT_INVALID)

    if result.aborted:
        click.echo(f"Run aborted by the watchdog at t = {result.sim_time:.1f} s. Outputs: {run_dir}")
        sys.exit(EXIT_WATCHDOG)
    click.echo(f"Complete coverage in {result.completion_time:.1f} s, total path {result.total_path_length:.1f} m. "
               f"Outputs: {run_dir}")


@cli.command()
@click.option("--scenario", "scenario_refs", required=True, multiple=True,
              help="Scenario file or preset name; repeat for several.")
@click.option("--strategy", "strategies", multiple=True, type=click.Choice([s.value for s in Strategy]),
              help="Strategies to compare (default: all).")
@click.option("--repeats", type=int, default=5, show_default=True)
@click.option("--seed", "seed_base", type=int, default=0, show_default=True, help="Seed of the first repeat.")
@click.option("--comm-range", default=None, help="Communication range in meters, or 'unlimited'.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None)
@click.option("--workers", type=int, default=1, show_default=True, help="Parallel worker processes.")
def batch(scenario_refs: Tuple[str, ...], strategies: Tuple[str, ...], repeats: int, seed_base: int,
          comm_range: Optional[str], out_dir: Optional[Path], workers: int):
    """Run the scenario x strategy x seed matrix and summarize it."""
    try:
        click.echo("[Phase 1/3] Loading scenarios...")
        global_config = load_global_config()
        configs = [apply_overrides(load_scenario(ref, global_config), comm_range=comm_range) for ref in scenario_refs]
        chosen = [Strategy.parse(s) for s in strategies] or list(Strategy)
        out_root = out_dir or get_output_root(global_config)

        click.echo(f"[Phase 2/3] Running {len(configs) * len(chosen) * repeats} simulations...")
        summary, results = run_batch(configs, chosen, repeats, seed_base, out_root, workers)
        click.echo(f"[Phase 3/3] Batch summary written to {out_root / 'batch_summary.tsv'}")
    except (CoverageSimError, OSError) as e:
        logger.error("%s", e)
        sys.exit(EXIT_INVALID)

    aborted = [r for r in results if r.aborted]
    for r in aborted:
        click.echo(f"  aborted: {r.scenario} / {r.strategy} / seed {r.seed}")
    if aborted:
        sys.exit(EXIT_WATCHDOG)


@cli.command("plot-data")
@click.option("--run-dir", required=True, type=click.Path(path_type=Path),
              help="Run directory (or batch directory for summary_bars).")
@click.option("--kind", "kinds", required=True, multiple=True, help=f"One of: {', '.join(PLOT_KINDS)}.")
@click.option("--dest", type=click.Path(file_okay=False, path_type=Path), default=None)
def plot_data(run_dir: Path, kinds: Tuple[str, ...], dest: Optional[Path]):
    """Extract columnar plotting data from finished runs."""
    try:
        for kind in kinds:
            for path in emit_plot_data(run_dir, kind, dest):
                click.echo(f"  wrote {path}")
    except (CoverageSimError, OSError) as e:
        logger.error("%s", e)
        sys.exit(EXIT_INVALID)


@cli.command()
@click.option("--scenario", "scenario_ref", required=True, help="Scenario YAML file or preset name.")
def validate(scenario_ref: str):
    """Check a scenario file without running it."""
    try:
        config = load_scenario(scenario_ref, load_global_config())
    except (CoverageSimError, OSError) as e:
        logger.error("%s", e)
        sys.exit(EXIT_INVALID)
    click.echo(f"OK: '{config.name}' with {len(config.robots)} robots on a "
               f"{config.grid.width_cells}x{config.grid.height_cells} grid.")


main = cli

if __name__ == '__main__':
    cli()
