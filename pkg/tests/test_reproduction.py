"""Desk-scale directional checks on the toy configuration (``pytest --runslow``)."""
from __future__ import annotations

import numpy as np
import pytest

from fedaugment.sim.engine import run_experiment
from fedaugment.sim.utils import CONFIG_DIR, load_experiment_config

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    cfg = load_experiment_config(CONFIG_DIR / "toy_config.json")
    return run_experiment(cfg, tmp_path_factory.mktemp("toy"))


def _mean(result, strategy, field):
    return float(np.mean([getattr(r, field) for r in result.records if r.strategy == strategy]))


def test_fligan_beats_fedavg_under_heavy_skew(toy_run):
    assert _mean(toy_run, "fligan", "accuracy") >= _mean(toy_run, "fedavg", "accuracy") + 0.05
    assert _mean(toy_run, "fligan", "accuracy") >= _mean(toy_run, "fedgan", "accuracy") - 0.02


def test_fedavg_is_fastest(toy_run):
    fedavg = _mean(toy_run, "fedavg", "wall_clock_seconds")
    assert fedavg < _mean(toy_run, "fligan", "wall_clock_seconds")
    assert fedavg < _mean(toy_run, "fedgan", "wall_clock_seconds")


def test_step_curves(toy_run):
    for key, history in toy_run.histories.items():
        rows = [record.synthetic_rows for record in history.records]
        assert rows == sorted(rows), key
        for earlier, later in zip(history.records, history.records[1:]):
            assert all(later.class_spread[n] <= earlier.class_spread[n] for n in earlier.class_spread), key
    fligan = [h for key, h in toy_run.histories.items() if key.startswith("fligan")]
    gains = [h.best_accuracy - h.records[0].accuracy for h in fligan]
    assert np.mean(gains) >= 0.03


def test_fligan_synthetic_data_is_more_useful(toy_run):
    gaps = {source: [r.gap for r in toy_run.efficacy if r.source == source] for source in ("fligan", "fedgan")}
    assert gaps["fligan"] and gaps["fedgan"]
    assert np.mean(gaps["fligan"]) <= np.mean(gaps["fedgan"])
