# app/output_generator.py
"""
Run directories, tab-separated result tables, Markdown reports, and plot-data
extraction from finished runs.

Layout of one run directory (<out>/<scenario>/<strategy>/seed_<seed>/):
    result.tsv        one summary row
    robots.tsv        per-robot cells covered, finish time and path length
    trajectories.tsv  time, robot_id, x, y, mode at every waypoint
    paths.tsv         every planned path revision
    partitions.tsv    cell -> robot snapshot at every partition event
    workloads.tsv     per-event cells, capacity, phi and workload per robot
    traffic.tsv       cumulative message counters per partition event
    swd.tsv           time, swd (mdcpp only)
    densities.tsv     per-cell ground truth and final predicted density
    scenario.yaml     the exact configuration that was run
    report.md         human-readable summary
"""
import dataclasses
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import pandas as pd

from .config_loader import ScenarioConfig, dump_scenario
from .engine import RunLog, ScenarioResult
from .errors import RunDirectoryExistsError, UnknownPlotKindError
from .template_manager import TemplateManager

logger = logging.getLogger(__name__)

PLOT_KINDS = ("trajectories", "partitions", "swd_curve", "density_heatmaps", "summary_bars")
PLOT_DATA_DIR_NAME = "plot_data"
FLOAT_FORMAT = "%.6f"

TABLE_COLUMNS = {
    "trajectories": ["time", "robot_id", "x", "y", "mode"],
    "paths": ["time", "robot_id", "revision", "order", "cell_index", "x", "y"],
    "partitions": ["event", "time", "cell_index", "robot_id"],
    "workloads": ["event", "time", "robot_id", "cells", "capacity", "phi", "workload"],
    "traffic": ["event", "time", "messages_sent", "messages_dropped"],
    "swd": ["time", "swd"],
}


def write_table(data: Union[pd.DataFrame, Sequence[Dict]], path: Path, columns: Optional[List[str]] = None) -> Path:
    df = data if isinstance(data, pd.DataFrame) else pd.DataFrame(list(data), columns=columns)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, sep="\t", index=False, float_format=FLOAT_FORMAT)
    return path


def read_table(path: Path) -> pd.DataFrame:
    if not path.is_file():
        raise FileNotFoundError(f"Expected result table not found: {path}")
    return pd.read_csv(path, sep="\t")


def run_directory(out_root: Path, scenario: str, strategy: str, seed: int) -> Path:
    return Path(out_root) / scenario / strategy / f"seed_{seed}"


class OutputGenerator:
    def __init__(self, out_root: Union[str, Path], template_manager: Optional[TemplateManager] = None):
        """
        Writes run artifacts under `out_root`.
        """
        self.out_root = Path(out_root)
        self.template_manager = template_manager or TemplateManager()

    def check_run_dir(self, scenario: str, strategy: str, seed: int) -> Path:
        run_dir = run_directory(self.out_root, scenario, strategy, seed)
        if run_dir.exists() and any(run_dir.iterdir()):
            raise RunDirectoryExistsError(f"Run directory {run_dir} already exists and is not empty; "
                                          f"choose another --out or remove it.")
        return run_dir

    def write_run(self, config: ScenarioConfig, result: ScenarioResult, log: RunLog) -> Path:
        run_dir = self.check_run_dir(config.name, result.strategy, result.seed)
        run_dir.mkdir(parents=True, exist_ok=True)

        write_table([result.summary_row()], run_dir / "result.tsv")
        robots = self._robot_rows(result)
        write_table(robots, run_dir / "robots.tsv", ["robot_id", "cells_covered", "finish_time", "path_length"])
        for name, columns in TABLE_COLUMNS.items():
            write_table(getattr(log, name), run_dir / f"{name}.tsv", columns)
        write_table(self._density_frame(config, log), run_dir / "densities.tsv")
        dump_scenario(config, run_dir / "scenario.yaml")

        report = self.template_manager.render_template("report/run_summary.md.j2", {
            "scenario": config.to_dict(),
            "result": {**dataclasses.asdict(result), "total_path_length": result.total_path_length},
            "robots": robots,
        })
        (run_dir / "report.md").write_text(report, encoding="utf-8")
        logger.info("Wrote run outputs to %s", run_dir)
        return run_dir

    @staticmethod
    def _robot_rows(result: ScenarioResult) -> List[Dict]:
        return [{"robot_id": rid, "cells_covered": result.per_robot_cells[rid],
                 "finish_time": result.per_robot_finish_time[rid], "path_length": result.per_robot_path_length[rid]}
                for rid in sorted(result.per_robot_path_length)]

    @staticmethod
    def _density_frame(config: ScenarioConfig, log: RunLog) -> pd.DataFrame:
        width = config.grid.width_cells
        n = config.grid.n_cells
        cells = list(range(n))
        centroids = config.grid.centroids()
        return pd.DataFrame({
            "cell_index": cells,
            "col": [c % width for c in cells],
            "row": [c // width for c in cells],
            "x": centroids[:, 0],
            "y": centroids[:, 1],
            "truth": log.truth_density,
            "predicted": log.predicted_density,
        })

    def write_batch(self, summary: pd.DataFrame, reductions: pd.DataFrame, context: Dict) -> List[Path]:
        self.out_root.mkdir(parents=True, exist_ok=True)
        written = [write_table(summary, self.out_root / "batch_summary.tsv"),
                   write_table(reductions, self.out_root / "batch_reductions.tsv")]
        report = self.template_manager.render_template("report/batch_summary.md.j2", context)
        report_path = self.out_root / "batch_report.md"
        report_path.write_text(report, encoding="utf-8")
        written.append(report_path)
        return written


def emit_plot_data(source_dir: Union[str, Path], kind: str, dest: Optional[Path] = None) -> List[Path]:
    """
    Extracts plotting data from a run directory (or, for summary_bars, any
    directory holding runs).

    Raises:
        UnknownPlotKindError: kind is not one of PLOT_KINDS.
        FileNotFoundError: the source lacks the tables the kind needs.
    """
    if kind not in PLOT_KINDS:
        raise UnknownPlotKindError(f"Unknown plot kind '{kind}'. Valid kinds: {', '.join(PLOT_KINDS)}")
    source_dir = Path(source_dir)
    if not source_dir.is_dir():
        raise FileNotFoundError(f"Result directory not found: {source_dir}")
    dest = Path(dest) if dest is not None else source_dir / PLOT_DATA_DIR_NAME

    if kind == "trajectories":
        traj = read_table(source_dir / "trajectories.tsv")
        return [write_table(group[["time", "x", "y"]], dest / f"trajectory_robot_{rid}.tsv")
                for rid, group in traj.groupby("robot_id", sort=True)]

    if kind == "partitions":
        parts = read_table(source_dir / "partitions.tsv")
        width = int(read_table(source_dir / "densities.tsv")["col"].max()) + 1
        parts["col"] = parts["cell_index"] % width
        parts["row"] = parts["cell_index"] // width
        return [write_table(group[["time", "col", "row", "robot_id"]], dest / f"partition_event_{int(event)}.tsv")
                for event, group in parts.groupby("event", sort=True)]

    if kind == "swd_curve":
        swd = read_table(source_dir / "swd.tsv").sort_values("time", kind="mergesort")
        return [write_table(swd[["time", "swd"]], dest / "swd_curve.tsv")]

    if kind == "density_heatmaps":
        dens = read_table(source_dir / "densities.tsv")
        written = []
        for column in ("truth", "predicted"):
            grid = dens.pivot(index="row", columns="col", values=column).sort_index()
            grid.columns = [f"col_{c}" for c in grid.columns]
            written.append(write_table(grid.reset_index(), dest / f"density_{column}.tsv"))
        return written

    # summary_bars
    results = sorted(source_dir.rglob("result.tsv"))
    if not results:
        raise FileNotFoundError(f"No result.tsv found under {source_dir}")
    runs = pd.concat([read_table(p) for p in results], ignore_index=True)
    runs = runs[~runs["aborted"].astype(bool)]
    bars = runs.groupby(["scenario", "strategy"], sort=True).agg(
        runs=("seed", "count"),
        completion_time_mean=("completion_time", "mean"),
        completion_time_std=("completion_time", "std"),
        total_path_length_mean=("total_path_length", "mean"),
        total_path_length_std=("total_path_length", "std"),
    ).reset_index().fillna(0.0)
    return [write_table(bars, dest / "summary_bars.tsv")]
