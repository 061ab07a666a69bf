# app/data_processor.py
import logging
from typing import Any, Dict, List, Sequence

import pandas as pd

from .config_loader import Strategy
from .engine import ScenarioResult

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "row_type", "scenario", "strategy", "seed", "runs", "completion_time", "completion_time_std",
    "total_path_length", "total_path_length_std", "partition_events", "messages_sent", "messages_dropped",
    "final_swd", "aborted",
]


class ResultProcessor:
    def __init__(self, results: Sequence[ScenarioResult]):
        """
        Collects finished runs for tabulation.
        """
        self.results = list(results)

    def run_table(self) -> pd.DataFrame:
        rows = [{**r.summary_row(), "row_type": "run", "runs": 1} for r in self.results]
        df = pd.DataFrame(rows, columns=[c for c in SUMMARY_COLUMNS if not c.endswith("_std")])
        return df.sort_values(["scenario", "strategy", "seed"], kind="mergesort").reset_index(drop=True)

    def aggregate_table(self) -> pd.DataFrame:
        """Mean and standard deviation per (scenario, strategy); aborted runs are excluded from the means."""
        runs = self.run_table()
        if runs.empty:
            return pd.DataFrame(columns=SUMMARY_COLUMNS)
        finished = runs[~runs["aborted"].astype(bool)]
        grouped = finished.groupby(["scenario", "strategy"], sort=True)
        agg = grouped.agg(
            runs=("seed", "count"),
            completion_time=("completion_time", "mean"),
            completion_time_std=("completion_time", "std"),
            total_path_length=("total_path_length", "mean"),
            total_path_length_std=("total_path_length", "std"),
            partition_events=("partition_events", "mean"),
            messages_sent=("messages_sent", "mean"),
            messages_dropped=("messages_dropped", "mean"),
            final_swd=("final_swd", "mean"),
        ).reset_index()
        aborted = runs.groupby(["scenario", "strategy"], sort=True)["aborted"].sum().astype(int).rename("aborted")
        agg = agg.merge(aborted.reset_index(), on=["scenario", "strategy"], how="right")
        agg["runs"] = agg["runs"].fillna(0).astype(int)
        agg[["completion_time_std", "total_path_length_std"]] = \
            agg[["completion_time_std", "total_path_length_std"]].fillna(0.0)
        agg["row_type"] = "aggregate"
        agg["seed"] = pd.NA
        return agg[SUMMARY_COLUMNS]

    def summary_table(self) -> pd.DataFrame:
        runs = self.run_table()
        runs["aborted"] = runs["aborted"].astype(int)
        for col in ("completion_time_std", "total_path_length_std"):
            runs[col] = float("nan")
        return pd.concat([runs[SUMMARY_COLUMNS], self.aggregate_table()], ignore_index=True)

    def reductions(self) -> pd.DataFrame:
        """Relative reduction of MDCPP mean time and path length against every other strategy, in percent."""
        agg = self.aggregate_table().set_index(["scenario", "strategy"])
        rows: List[Dict[str, Any]] = []
        for scenario in sorted(agg.index.get_level_values("scenario").unique()):
            if (scenario, Strategy.MDCPP.value) not in agg.index:
                continue
            ours = agg.loc[(scenario, Strategy.MDCPP.value)]
            for strategy in sorted(agg.loc[scenario].index):
                if strategy == Strategy.MDCPP.value:
                    continue
                other = agg.loc[(scenario, strategy)]
                rows.append({
                    "scenario": scenario,
                    "baseline": strategy,
                    "time_reduction_pct": 100.0 * (other["completion_time"] - ours["completion_time"])
                    / other["completion_time"],
                    "path_reduction_pct": 100.0 * (other["total_path_length"] - ours["total_path_length"])
                    / other["total_path_length"],
                })
        return pd.DataFrame(rows, columns=["scenario", "baseline", "time_reduction_pct", "path_reduction_pct"])
