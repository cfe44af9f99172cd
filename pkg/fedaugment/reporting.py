"""Report emission: charts, timing table and synthetic-data statistics."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Mapping, Sequence, Set

import pandas as pd

from .sim.errors import ContractError
from .sim.evaluation import average_records, records_frame
from .sim.states import AugmentationHistory, EfficacyReport, MetricsRecord
from .sim.utils import GAN_STRATEGIES
from .viz.charts import accuracy_bar, efficacy_bar, save_figure, step_curve

logger = logging.getLogger(__name__)

SYNTHETIC_COLUMNS = ["dataset", "strategy", "alpha", "real_rows", "synthetic_rows", "pct_new", "steps"]


def _write_table(df: pd.DataFrame, out_dir: Path, name: str) -> Set[Path]:
    csv_path = out_dir / f"{name}.csv"
    txt_path = out_dir / f"{name}.txt"
    df.to_csv(csv_path, index=False)
    text = df.to_string(index=False, float_format=lambda v: f"{v:.4f}") if not df.empty else "(no rows)"
    txt_path.write_text(text + "\n", encoding="utf-8")
    return {csv_path, txt_path}


def timing_table(records: Sequence[MetricsRecord]) -> pd.DataFrame:
    averages = average_records(records)
    return averages[["dataset", "strategy", "alpha", "n_seeds", "wall_clock_seconds"]]


def synthetic_table(records: Sequence[MetricsRecord]) -> pd.DataFrame:
    """Real rows, synthetic rows added at the best step, their share and the step count."""
    df = records_frame(records)
    if df.empty:
        return pd.DataFrame(columns=SYNTHETIC_COLUMNS)
    df = df[df["strategy"].isin(GAN_STRATEGIES)]
    if df.empty:
        return pd.DataFrame(columns=SYNTHETIC_COLUMNS)
    grouped = df.groupby(["dataset", "strategy", "alpha"], sort=True).agg(
        real_rows=("real_rows", "mean"),
        synthetic_rows=("synthetic_rows_added", "mean"),
        steps=("steps_taken", "mean"),
    )
    grouped["pct_new"] = 100.0 * grouped["synthetic_rows"] / grouped["real_rows"]
    return grouped.reset_index()[SYNTHETIC_COLUMNS]


def history_frame(histories: Mapping[str, AugmentationHistory]) -> pd.DataFrame:
    rows = [
        {"run": run, "step": record.step, "accuracy": record.accuracy, "synthetic_rows": record.synthetic_rows}
        for run, history in sorted(histories.items())
        for record in history.records
    ]
    return pd.DataFrame(rows, columns=["run", "step", "accuracy", "synthetic_rows"])


def efficacy_frame(reports: Sequence[EfficacyReport]) -> pd.DataFrame:
    """Mean accuracy of the real-trained forest and of each synthetic source."""
    if not reports:
        return pd.DataFrame(columns=["training_data", "accuracy", "gap", "runs"])
    df = pd.DataFrame(
        [
            {"source": r.source or "synthetic", "real": r.real_data_accuracy, "synthetic": r.synthetic_data_accuracy, "gap": r.gap}
            for r in reports
        ]
    )
    rows = [{"training_data": "real", "accuracy": df["real"].mean(), "gap": 0.0, "runs": len(df)}]
    for source, frame in df.groupby("source", sort=True):
        rows.append(
            {
                "training_data": f"{source}-synthetic",
                "accuracy": frame["synthetic"].mean(),
                "gap": frame["gap"].mean(),
                "runs": len(frame),
            }
        )
    return pd.DataFrame(rows)


def emit_reports(
    records: Sequence[MetricsRecord],
    histories: Mapping[str, AugmentationHistory],
    efficacy_reports: Sequence[EfficacyReport],
    out_dir: Path,
    image_format: str = "png",
) -> Set[Path]:
    """Write every chart and table for a finished run; returns the files written."""
    if not records:
        raise ContractError("emit_reports needs at least one record")
    out_dir.mkdir(parents=True, exist_ok=True)
    figures = out_dir / "figures"
    written: Set[Path] = set()
    notices: List[str] = []

    averages = average_records(records)
    written.add(save_figure(accuracy_bar(averages), figures / "accuracy_by_alpha", image_format))

    steps = history_frame(histories)
    if steps.empty:
        notices.append("no augmentation history recorded; step chart skipped")
    else:
        written.add(save_figure(step_curve(steps), figures / "accuracy_per_step", image_format))
        steps.to_csv(out_dir / "step_history.csv", index=False)
        written.add(out_dir / "step_history.csv")

    efficacy = efficacy_frame(efficacy_reports)
    if efficacy.empty:
        notices.append("no efficacy reports; efficacy chart skipped")
    else:
        written.add(save_figure(efficacy_bar(efficacy), figures / "efficacy", image_format))
        written |= _write_table(efficacy, out_dir, "efficacy")

    written |= _write_table(timing_table(records), out_dir, "timing")
    written |= _write_table(synthetic_table(records), out_dir, "synthetic_data")

    for notice in notices:
        logger.warning(notice)
    summary = out_dir / "summary.txt"
    body = averages.to_string(index=False, float_format=lambda v: f"{v:.4f}")
    summary.write_text("\n".join([body, "", *notices]).rstrip() + "\n", encoding="utf-8")
    written.add(summary)
    return written


__all__ = ["timing_table", "synthetic_table", "history_frame", "efficacy_frame", "emit_reports"]
