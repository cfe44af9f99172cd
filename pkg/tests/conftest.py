from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from fedaugment.sim.metadata import collect_local_metadata, merge_metadata  # noqa: E402
from fedaugment.sim.states import Dataset, TableSchema  # noqa: E402
from fedaugment.sim.tabular import dirichlet_partition, make_mixture_dataset  # noqa: E402
from fedaugment.sim.utils import GanConfig, MixtureConfig, parse_experiment_config  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale reproduction tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale reproduction, minutes of CPU")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def toy_schema() -> TableSchema:
    return TableSchema.build(["colour"], ["x", "y"], "label", ["x", "colour", "y", "label"])


@pytest.fixture
def blobs(toy_schema) -> Dataset:
    """Two well separated classes, 60 rows each."""
    gen = np.random.default_rng(0)
    frames = []
    for label, centre, colours in (("a", -3.0, ["red", "green"]), ("b", 3.0, ["blue", "green"])):
        frames.append(
            pd.DataFrame(
                {
                    "x": gen.normal(centre, 0.5, 60),
                    "colour": gen.choice(colours, 60),
                    "y": gen.normal(centre, 0.5, 60),
                    "label": [label] * 60,
                }
            )
        )
    frame = pd.concat(frames, ignore_index=True)
    frame["colour"] = frame["colour"].astype(object)
    frame["label"] = frame["label"].astype(object)
    return Dataset(toy_schema, frame[list(toy_schema.column_names)])


@pytest.fixture
def small_mixture() -> Dataset:
    cfg = MixtureConfig(n_rows=600, n_classes=3, n_continuous=3, n_categorical=2, n_categories=3, seed=1)
    return make_mixture_dataset(cfg)


@pytest.fixture
def federation(small_mixture):
    partitions = dirichlet_partition(small_mixture, n_nodes=4, alpha=1.0, seed=3)
    gm = merge_metadata([collect_local_metadata(part, small_mixture.schema) for part in partitions])
    return partitions, gm


@pytest.fixture
def tiny_gan() -> GanConfig:
    return GanConfig(noise_dim=4, gen_hidden=[8], disc_hidden=[8], n_critic=1, batch_size=16, learning_rate=1e-3)


@pytest.fixture
def tiny_config(tmp_path):
    return parse_experiment_config(
        {
            "name": "tiny",
            "dataset": {
                "name": "mixture",
                "mixture": {"n_rows": 300, "n_classes": 3, "n_continuous": 3, "n_categorical": 1, "n_categories": 3, "seed": 2},
            },
            "n_nodes": 3,
            "alphas": [1.0],
            "seeds": [0],
            "strategies": ["fedavg", "fedgan", "fligan"],
            "gan": {"noise_dim": 4, "gen_hidden": [8], "disc_hidden": [8], "n_critic": 1, "batch_size": 32},
            "classifier": {"hidden": [8], "rounds": 2, "local_epochs": 1, "batch_size": 32},
            "grouping": {"r_init": 2, "e_init": 2},
            "fedgan": {"rounds": 2, "epochs": 2},
            "augmentation": {"delta": 1, "step_fraction": 0.1, "max_steps": 2},
            "efficacy": {"n_estimators": 10},
            "output_dir": str(tmp_path / "runs"),
        }
    )
