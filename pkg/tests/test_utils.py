from __future__ import annotations

import pytest

from fedaugment.sim.errors import ConfigError
from fedaugment.sim.utils import (
    CONFIG_DIR,
    derive_seed,
    load_experiment_config,
    parse_experiment_config,
    with_overrides,
)


def test_default_config_matrix():
    cfg = load_experiment_config()
    assert cfg.alphas == [0.05, 1.0, 1.5, 2.0]
    assert cfg.seed_list() == [0, 1, 2]
    assert cfg.n_nodes == 8
    assert (cfg.augmentation.delta, cfg.augmentation.step_fraction) == (2, 0.01)
    assert (cfg.grouping.r_init, cfg.grouping.e_init, cfg.grouping.eps, cfg.grouping.min_pts) == (3, 60, 0.5, 1)
    assert cfg.gan.lambda_gp == 10.0
    assert len(cfg.strategies) * len(cfg.alphas) * len(cfg.seed_list()) == 36


def test_toy_config_loads():
    cfg = load_experiment_config(CONFIG_DIR / "toy_config.json")
    assert cfg.alphas == [0.05]
    assert cfg.grouping.alpha_r == 0.5


def test_invalid_values_raise_config_error():
    base = {"dataset": {"mixture": {}}}
    parse_experiment_config(base)
    for bad in (
        {"strategies": ["centralised"]},
        {"alphas": [0.0]},
        {"alphas": []},
        {"augmentation": {"step_fraction": 0.0}},
        {"grouping": {"alpha_r": 1.5}},
        {"gan": {"gen_hidden": [0]}},
    ):
        with pytest.raises(ConfigError):
            parse_experiment_config({**base, **bad})
    with pytest.raises(ConfigError):
        parse_experiment_config({"dataset": {"name": "no-source"}})
    with pytest.raises(ConfigError):
        load_experiment_config(CONFIG_DIR / "missing.json")


def test_overrides_revalidate():
    cfg = parse_experiment_config({"dataset": {"mixture": {}}})
    assert with_overrides(cfg, n_nodes=3, alphas=None).n_nodes == 3
    assert with_overrides(cfg, n_nodes=None).n_nodes == cfg.n_nodes
    with pytest.raises(ConfigError):
        with_overrides(cfg, strategies=["nope"])


def test_hash_tracks_content():
    cfg = parse_experiment_config({"dataset": {"mixture": {}}})
    assert cfg.hash() == parse_experiment_config({"dataset": {"mixture": {}}}).hash()
    assert cfg.hash() != with_overrides(cfg, n_nodes=3).hash()


def test_derive_seed_is_stable_and_key_sensitive():
    assert derive_seed(1, "a", 0.5) == derive_seed(1, "a", 0.5)
    assert derive_seed(1, "a", 0.5) != derive_seed(1, "a", 1.5)
    assert derive_seed(1, "a") != derive_seed(2, "a")
    assert 0 <= derive_seed(123, "x") < 2**63


def test_explicit_seeds_must_agree_with_repeats():
    base = {"dataset": {"mixture": {}}}
    assert parse_experiment_config({**base, "seeds": [4, 5]}).seed_list() == [4, 5]
    assert parse_experiment_config({**base, "seeds": [4, 5], "repeats": 2}).seed_list() == [4, 5]
    assert parse_experiment_config({**base, "repeats": 2, "base_seed": 10}).seed_list() == [10, 11]
    with pytest.raises(ConfigError):
        parse_experiment_config({**base, "seeds": [4, 5], "repeats": 3})
