"""Result tables: per-item scores, improvements over the noisy input, method gaps"""

from typing import Dict, List, Optional

import numpy as np
import pandas as pd

import constants

METRIC_COLUMNS = ["si_sdr", "si_sir", "si_sar"]


def ci95(values: pd.Series) -> float:
    """Half width of the normal 95% confidence interval of the mean"""
    values = values.dropna()
    if len(values) < 2:
        return 0.0
    return float(constants.CI95_Z * values.std(ddof=1) / np.sqrt(len(values)))


class ResultsAnalytics:
    """Aggregates rows of (experiment, item, condition columns, method, metrics)"""

    def __init__(self, rows: List[Dict], condition_columns: Optional[List[str]] = None):
        self.frame = pd.DataFrame(rows)
        self.condition_columns = condition_columns or []
        if not self.frame.empty:
            keys = ["experiment"] + self.condition_columns + ["item", "method"]
            self.frame = self.frame.sort_values(keys, kind="mergesort").reset_index(drop=True)

    @property
    def group_columns(self) -> List[str]:
        return ["experiment"] + self.condition_columns

    def improvements(self) -> pd.DataFrame:
        """Per-item delta of every method over the noisy input of the same condition"""
        if self.frame.empty:
            return pd.DataFrame()
        keys = self.group_columns + ["item"]
        noisy = self.frame[self.frame["method"] == constants.NOISY_LABEL].set_index(keys)[METRIC_COLUMNS]
        enhanced = self.frame[self.frame["method"] != constants.NOISY_LABEL]
        joined = enhanced.join(noisy, on=keys, rsuffix="_noisy")
        for metric in METRIC_COLUMNS:
            joined[f"delta_{metric}"] = joined[metric] - joined[f"{metric}_noisy"]
        return joined[keys + ["method"] + [f"delta_{m}" for m in METRIC_COLUMNS]]

    def summary(self) -> pd.DataFrame:
        """Mean and ci95 of absolute scores and deltas per condition and method"""
        if self.frame.empty:
            return pd.DataFrame()
        keys = self.group_columns + ["item", "method"]
        merged = self.frame.merge(self.improvements(), on=keys, how="left")
        value_columns = METRIC_COLUMNS + [f"delta_{m}" for m in METRIC_COLUMNS]
        grouped = merged.groupby(self.group_columns + ["method"], sort=True)[value_columns]
        means = grouped.mean()
        intervals = grouped.agg(ci95)
        intervals.columns = [f"{c}_ci95" for c in intervals.columns]
        table = means.join(intervals)
        table["items"] = grouped.size()
        return table.reset_index()

    def metric_table(self) -> pd.DataFrame:
        """Long rows of (condition, method, metric, mean, ci95), deltas over the noisy input included"""
        summary = self.summary()
        if summary.empty:
            return summary
        keys = self.group_columns + ["method"]
        metrics = METRIC_COLUMNS + [f"delta_{m}" for m in METRIC_COLUMNS]
        means = summary.melt(id_vars=keys, value_vars=metrics, var_name="metric", value_name="mean")
        intervals = summary.melt(id_vars=keys, value_vars=[f"{m}_ci95" for m in metrics],
                                 var_name="metric", value_name="ci95")
        intervals["metric"] = intervals["metric"].str.replace("_ci95", "", regex=False)
        return means.merge(intervals, on=keys + ["metric"]).dropna(subset=["mean"])

    def gap_table(self, method_a: str = "nl-mmse", method_b: str = "mvdr-mmse") -> pd.DataFrame:
        """Per-condition mean and ci95 of method_a minus method_b on identical items"""
        if self.frame.empty:
            return pd.DataFrame()
        keys = self.group_columns + ["item"]
        a = self.frame[self.frame["method"] == method_a].set_index(keys)[METRIC_COLUMNS]
        b = self.frame[self.frame["method"] == method_b].set_index(keys)[METRIC_COLUMNS]
        gap = (a - b).dropna(how="all").reset_index()
        if gap.empty:
            return pd.DataFrame()
        grouped = gap.groupby(self.group_columns, sort=True)[METRIC_COLUMNS]
        table = grouped.mean().add_prefix("gap_")
        intervals = grouped.agg(ci95).add_prefix("gap_").add_suffix("_ci95")
        table = table.join(intervals).reset_index()
        table.insert(len(self.group_columns), "comparison", f"{method_a} - {method_b}")
        return table

    def component_curve(self) -> pd.DataFrame:
        """Mean SI-SDR per mixture component count and method"""
        if self.frame.empty or "components" not in self.frame:
            return pd.DataFrame()
        curve = self.frame.groupby(["components", "method"], sort=True)["si_sdr"].agg(["mean", ci95])
        return curve.rename(columns={"mean": "si_sdr", "ci95": "si_sdr_ci95"}).reset_index()

    def export(self, prefix: str) -> Dict[str, str]:
        """Write results, summary, metrics and gap CSVs; returns kind -> path"""
        outputs = {
            "results": (self.frame, f"{prefix}_results.csv"),
            "summary": (self.summary(), f"{prefix}_summary.csv"),
            "metrics": (self.metric_table(), f"{prefix}_metrics.csv"),
            "gap": (self.gap_table(), f"{prefix}_gap.csv"),
        }
        written = {}
        for kind, (table, path) in outputs.items():
            if not table.empty:
                table.to_csv(path, index=False, float_format="%.6f")
                written[kind] = path
        return written
