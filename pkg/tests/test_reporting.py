from __future__ import annotations

import pandas as pd
import pytest

from fedaugment.reporting import efficacy_frame, emit_reports, history_frame, synthetic_table, timing_table
from fedaugment.sim.errors import ContractError
from fedaugment.sim.states import AugmentationHistory, EfficacyReport, MetricsRecord, StepRecord
from fedaugment.viz.charts import accuracy_bar, step_curve


def _records():
    return [
        MetricsRecord("fedavg", 0.05, 0, 0.60, 2.0, 0, 0, 200, "mixture"),
        MetricsRecord("fligan", 0.05, 0, 0.70, 5.0, 20, 2, 200, "mixture"),
        MetricsRecord("fligan", 0.05, 1, 0.72, 7.0, 40, 3, 200, "mixture"),
        MetricsRecord("fedavg", 1.0, 0, 0.80, 2.0, 0, 0, 200, "mixture"),
        MetricsRecord("fligan", 1.0, 0, 0.81, 4.0, 0, 0, 200, "mixture"),
    ]


def _history():
    return AugmentationHistory(
        records=[StepRecord(0, 0, 0.6), StepRecord(1, 10, 0.7, 10), StepRecord(2, 20, 0.65, 10)],
        best_step=1,
        best_accuracy=0.7,
    )


def _report(source, synthetic):
    return EfficacyReport(0.9, synthetic, 0.9 - synthetic, "forest", "rows", source=source)


def test_synthetic_table_covers_generator_strategies_only():
    table = synthetic_table(_records())
    assert list(table.columns) == ["dataset", "strategy", "alpha", "real_rows", "synthetic_rows", "pct_new", "steps"]
    assert set(table.strategy) == {"fligan"}
    row = table[table.alpha == 0.05].iloc[0]
    assert row.synthetic_rows == pytest.approx(30.0)
    assert row.pct_new == pytest.approx(15.0)
    assert synthetic_table([_records()[0]]).empty


def test_timing_table_averages_seconds():
    table = timing_table(_records())
    row = table[(table.strategy == "fligan") & (table.alpha == 0.05)].iloc[0]
    assert row.wall_clock_seconds == pytest.approx(6.0)
    assert row.n_seeds == 2


def test_efficacy_frame_groups_by_source():
    frame = efficacy_frame([_report("fligan", 0.8), _report("fligan", 0.7), _report("fedgan", 0.5)])
    assert frame.training_data.tolist() == ["real", "fedgan-synthetic", "fligan-synthetic"]
    assert frame.accuracy.tolist() == pytest.approx([0.9, 0.5, 0.75])
    assert efficacy_frame([]).empty


def test_charts_trace_per_strategy_and_run():
    averages = pd.DataFrame(
        {"dataset": ["d", "d"], "strategy": ["fedavg", "fligan"], "alpha": [1.0, 1.0], "accuracy": [0.5, 0.6]}
    )
    assert len(accuracy_bar(averages).data) == 2
    steps = history_frame({"fligan_a1_s0": _history(), "fedgan_a1_s0": _history()})
    assert len(step_curve(steps).data) == 2
    assert steps[steps.run == "fligan_a1_s0"].step.tolist() == [0, 1, 2]


def test_emit_reports_html(tmp_path):
    written = emit_reports(_records(), {"fligan_a1_s0": _history()}, [_report("fligan", 0.8)], tmp_path, "html")
    names = {path.name for path in written}
    assert {"accuracy_by_alpha.html", "accuracy_per_step.html", "efficacy.html"} <= names
    assert {"timing.csv", "timing.txt", "synthetic_data.csv", "efficacy.csv", "summary.txt", "step_history.csv"} <= names
    assert all(path.exists() for path in written)


def test_emit_reports_notes_missing_sections(tmp_path):
    written = emit_reports(_records()[:1], {}, [], tmp_path, "html")
    summary = (tmp_path / "summary.txt").read_text(encoding="utf-8")
    assert "no augmentation history" in summary
    assert "no efficacy reports" in summary
    assert not any(path.name.startswith("efficacy") for path in written)
    assert "(no rows)" in (tmp_path / "synthetic_data.txt").read_text(encoding="utf-8")


def test_emit_reports_needs_records(tmp_path):
    with pytest.raises(ContractError):
        emit_reports([], {}, [], tmp_path)
