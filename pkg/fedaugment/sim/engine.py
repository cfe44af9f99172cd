"""Experiment engine: runs the strategy x alpha x seed matrix and persists every cell."""
from __future__ import annotations

import datetime as dt
import functools
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd
from sqlmodel import Session as DBSession

from ..db import crud
from ..db.connection import get_engine, resolve_database_url
from .augmentation import run_fligan
from .errors import ConfigError, ContractError
from .evaluation import average_records, ml_efficacy, records_frame, synthesize_efficacy_set, timed
from .federation import (
    GAN_PHASE,
    Sampler,
    load_bank,
    save_bank,
    train_federated_classifier,
    train_federated_gan,
    train_fedgan_baseline,
)
from .metadata import GlobalMetadata, collect_local_metadata, load_metadata, merge_metadata, save_metadata
from .states import (
    AugmentationHistory,
    Dataset,
    EfficacyReport,
    MetricsRecord,
    NodePartition,
    RoundLog,
    StepRecord,
)
from .tabular import class_share_entropy, dirichlet_partition, load_configured_dataset, split_train_test
from .grouping import schedule
from .utils import GAN_STRATEGIES, STRATEGIES, ExperimentConfig, GroupingConfig, derive_seed

logger = logging.getLogger(__name__)

SNAPSHOT_FILE = "config_snapshot.json"
RESULTS_FILE = "results.csv"
SUMMARY_FILE = "results_summary.csv"


@dataclass
class CellData:
    """Split, partitions and merged metadata shared by every strategy of one (alpha, seed)."""

    alpha: float
    seed: int
    train: Dataset
    test: Dataset
    partitions: List[NodePartition]
    gm: GlobalMetadata


@dataclass
class CellResult:
    record: MetricsRecord
    history: Optional[AugmentationHistory] = None
    efficacy: Optional[EfficacyReport] = None
    round_logs: List[RoundLog] = field(default_factory=list)
    sampler: Optional[Sampler] = None


@dataclass
class ExperimentResult:
    out_dir: Path
    records: List[MetricsRecord]
    histories: Dict[str, AugmentationHistory]
    efficacy: List[EfficacyReport]
    summary: pd.DataFrame


def cell_key(strategy: str, alpha: float, seed: int) -> str:
    return f"{strategy}_a{alpha:g}_s{seed}"


def history_to_dict(history: AugmentationHistory) -> Dict[str, Any]:
    return {
        "best_step": history.best_step,
        "best_accuracy": history.best_accuracy,
        "records": [asdict(record) for record in history.records],
    }


def history_from_dict(payload: Dict[str, Any]) -> AugmentationHistory:
    records = [
        StepRecord(
            step=int(item["step"]),
            synthetic_rows=int(item["synthetic_rows"]),
            accuracy=float(item["accuracy"]),
            quota_rows=int(item.get("quota_rows", 0)),
            class_spread={int(k): int(v) for k, v in item.get("class_spread", {}).items()},
        )
        for item in payload.get("records", [])
    ]
    return AugmentationHistory(records, int(payload["best_step"]), float(payload["best_accuracy"]))


def grouping_outcome(logs: List[RoundLog], grouping: GroupingConfig) -> Dict[str, List[Dict[str, Any]]]:
    """Members, volume and schedule of each classwise group, per label, in training order."""
    groups: Dict[str, Dict[int, List[RoundLog]]] = {}
    for log in logs:
        if log.phase == GAN_PHASE and log.label is not None:
            groups.setdefault(log.label, {}).setdefault(int(log.group_index or 0), []).append(log)
    outcome: Dict[str, List[Dict[str, Any]]] = {}
    for label, by_group in groups.items():
        outcome[label] = []
        for idx in sorted(by_group):
            first = by_group[idx][0]
            sched = schedule(grouping.r_init, grouping.e_init, grouping.alpha_r, grouping.alpha_e, idx)
            outcome[label].append(
                {
                    "group": idx,
                    "nodes": list(first.participants),
                    "volume": int(sum(first.sample_counts)),
                    "rounds": len(by_group[idx]),
                    "epochs": sched.epochs,
                }
            )
    return outcome


def prepare_output_dir(base: Path, cfg: ExperimentConfig) -> Path:
    """Use ``base`` unless it already holds a run; then a fresh timestamped child."""
    target = base
    if (base / SNAPSHOT_FILE).exists():
        stamp = dt.datetime.now().strftime("%Y%m%d-%H%M%S")
        target = base / f"run-{stamp}"
        suffix = 1
        while target.exists():
            target = base / f"run-{stamp}-{suffix}"
            suffix += 1
        logger.info("%s already holds a run; writing to %s", base, target)
    target.mkdir(parents=True, exist_ok=True)
    snapshot = {"config": json.loads(cfg.json()), "config_hash": cfg.hash()}
    (target / SNAPSHOT_FILE).write_text(json.dumps(snapshot, indent=2, sort_keys=True), encoding="utf-8")
    return target


def prepare_cell(cfg: ExperimentConfig, data: Dataset, alpha: float, seed: int) -> CellData:
    train, test = split_train_test(data, cfg.dataset.test_fraction, derive_seed(seed, "split"))
    partitions = dirichlet_partition(train, cfg.n_nodes, alpha, derive_seed(seed, "partition", alpha))
    for part in partitions:
        logger.debug("alpha=%g seed=%d node %d: %d rows, class entropy %.3f", alpha, seed, part.node_id, len(part.data), class_share_entropy(part))
    gm = merge_metadata([collect_local_metadata(part, data.schema) for part in partitions])
    return CellData(alpha, seed, train, test, partitions, gm)


def train_sampler(cfg: ExperimentConfig, cell: CellData, strategy: str) -> Tuple[Sampler, List[RoundLog]]:
    seed = derive_seed(cell.seed, "generator", cell.alpha, strategy)
    if strategy == "fligan":
        g = cfg.grouping
        return train_federated_gan(
            cell.partitions, cell.gm, g.r_init, g.e_init, g.alpha_r, g.alpha_e, cfg.gan, seed,
            eps=g.eps, min_pts=g.min_pts, max_workers=cfg.max_workers,
        )
    if strategy == "fedgan":
        return train_fedgan_baseline(
            cell.partitions, cell.gm, cfg.fedgan.rounds, cfg.fedgan.epochs, cfg.gan, seed, max_workers=cfg.max_workers
        )
    raise ConfigError(f"strategy {strategy!r} does not train a generator")


def _efficacy(cfg: ExperimentConfig, cell: CellData, sampler: Sampler, strategy: str) -> Optional[EfficacyReport]:
    synth = synthesize_efficacy_set(sampler, cell.train, cell.gm, derive_seed(cell.seed, "efficacy", cell.alpha, strategy))
    if len(synth) == 0:
        logger.warning("%s produced no synthetic rows for the efficacy check", strategy)
        return None
    return ml_efficacy(cell.train, cell.test, synth, cell.gm, derive_seed(cell.seed, "forest", cell.alpha), cfg.efficacy, source=strategy)


def run_cell(cfg: ExperimentConfig, cell: CellData, strategy: str, sampler: Optional[Sampler] = None) -> CellResult:
    """One strategy on one prepared cell; ``sampler`` skips generator training when given."""
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}")
    classifier_seed = derive_seed(cell.seed, "classifier", cell.alpha)
    trainer = functools.partial(train_federated_classifier, max_workers=cfg.max_workers)
    base = dict(strategy=strategy, alpha=cell.alpha, seed=cell.seed, real_rows=len(cell.train), dataset=cfg.dataset.name)

    if strategy == "fedavg":
        (_, acc, logs), seconds = timed(
            trainer, [part.data for part in cell.partitions], cell.gm, cfg.classifier, cell.test, classifier_seed
        )
        return CellResult(MetricsRecord(accuracy=acc, wall_clock_seconds=seconds, **base), round_logs=logs)

    def pipeline() -> Tuple[Sampler, AugmentationHistory, List[RoundLog]]:
        logs: List[RoundLog] = []
        bank = sampler
        if bank is None:
            bank, gan_logs = train_sampler(cfg, cell, strategy)
            logs.extend(gan_logs)
        aug = cfg.augmentation
        _, history = run_fligan(
            cell.partitions, cell.gm, bank, cfg.classifier, aug.delta, aug.step_fraction, aug.max_steps,
            cell.test, classifier_seed, trainer=trainer, round_logs=logs,
        )
        return bank, history, logs

    (bank, history, logs), seconds = timed(pipeline)
    record = MetricsRecord(
        accuracy=history.best_accuracy,
        wall_clock_seconds=seconds,
        synthetic_rows_added=history.best_synthetic_rows,
        steps_taken=history.best_step,
        **base,
    )
    report = _efficacy(cfg, cell, bank, strategy) if cfg.efficacy_enabled else None
    return CellResult(record, history, report, logs, bank)


class RunStore:
    """Output directory plus run-log database for one invocation."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Path) -> None:
        self.cfg = cfg
        self.out_dir = out_dir
        self.engine = get_engine(resolve_database_url(cfg.database_url, out_dir))
        with DBSession(self.engine) as db:
            experiment = crud.create_experiment(db, cfg.name, json.loads(cfg.json()), cfg.hash(), str(out_dir))
            self.experiment_id = experiment.id

    def audit(self, action: str, payload: Dict[str, Any]) -> None:
        with DBSession(self.engine) as db:
            crud.log_audit(db, self.experiment_id, action, payload)

    def write_metadata(self, cell: CellData) -> Path:
        return save_metadata(cell.gm, self.out_dir / "metadata" / f"a{cell.alpha:g}_s{cell.seed}.json")

    def write_bank(self, sampler: Sampler, cell: CellData, strategy: str, dataset: str) -> Path:
        directory = self.out_dir / "models" / cell_key(strategy, cell.alpha, cell.seed)
        save_metadata(cell.gm, directory / "metadata.json")
        extra = {"strategy": strategy, "alpha": cell.alpha, "seed": cell.seed, "dataset": dataset}
        return save_bank(sampler, directory, extra)

    def write_cell(self, result: CellResult, cell: CellData) -> None:
        """Append the record to the results table and write the cell's own files."""
        record = result.record
        key = cell_key(record.strategy, record.alpha, record.seed)
        results_path = self.out_dir / RESULTS_FILE
        records_frame([record]).to_csv(results_path, mode="a", header=not results_path.exists(), index=False)

        history = history_to_dict(result.history) if result.history is not None else None
        payload = {
            "record": asdict(record),
            "history": history,
            "efficacy": asdict(result.efficacy) if result.efficacy is not None else None,
            "round_logs": len(result.round_logs),
        }
        cells_dir = self.out_dir / "cells"
        cells_dir.mkdir(parents=True, exist_ok=True)
        (cells_dir / f"{key}.json").write_text(json.dumps(payload, indent=2), encoding="utf-8")
        if result.sampler is not None:
            self.write_bank(result.sampler, cell, record.strategy, record.dataset)

        with DBSession(self.engine) as db:
            run = crud.record_run(db, self.experiment_id, record, history)
            crud.record_round_logs(db, self.experiment_id, run.id, result.round_logs)
            if result.efficacy is not None and result.efficacy.degenerate:
                crud.log_audit(db, self.experiment_id, "efficacy_degenerate", {"cell": key})
            groups = grouping_outcome(result.round_logs, self.cfg.grouping)
            if groups:
                crud.log_audit(db, self.experiment_id, "grouping", {"cell": key, "groups": groups})
            if result.sampler is not None:
                skipped = [label for label in cell.gm.class_labels if not result.sampler.covers(label)]
                if skipped:
                    crud.log_audit(db, self.experiment_id, "labels_without_generator", {"cell": key, "labels": skipped})

    def finish(self, status: str = "finished") -> None:
        with DBSession(self.engine) as db:
            experiment = crud.get_experiment(db, self.experiment_id)
            if experiment is not None:
                crud.finish_experiment(db, experiment, status)


def load_dataset_for(cfg: ExperimentConfig, store: Optional[RunStore] = None) -> Dataset:
    data = load_configured_dataset(cfg.dataset)
    if data.dropped_rows and store is not None:
        store.audit("rows_dropped", {"dataset": cfg.dataset.name, "rows": data.dropped_rows})
    return data


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[Path] = None) -> ExperimentResult:
    unknown = [s for s in cfg.strategies if s not in STRATEGIES]
    if unknown:
        raise ConfigError(f"unknown strategies {unknown}; choose from {list(STRATEGIES)}")
    target = prepare_output_dir(Path(out_dir or cfg.output_dir), cfg)
    store = RunStore(cfg, target)
    records: List[MetricsRecord] = []
    histories: Dict[str, AugmentationHistory] = {}
    reports: List[EfficacyReport] = []
    try:
        data = load_dataset_for(cfg, store)
        for alpha in cfg.alphas:
            for seed in cfg.seed_list():
                cell = prepare_cell(cfg, data, alpha, seed)
                store.write_metadata(cell)
                for strategy in cfg.strategies:
                    result = run_cell(cfg, cell, strategy)
                    store.write_cell(result, cell)
                    records.append(result.record)
                    if result.history is not None:
                        histories[cell_key(strategy, alpha, seed)] = result.history
                    if result.efficacy is not None:
                        reports.append(result.efficacy)
                    logger.info(
                        "%s alpha=%g seed=%d: accuracy %.4f in %.1fs",
                        strategy, alpha, seed, result.record.accuracy, result.record.wall_clock_seconds,
                    )
    except Exception:
        store.finish("failed")
        raise

    summary = average_records(records)
    summary.to_csv(target / SUMMARY_FILE, index=False)
    store.finish()
    return ExperimentResult(target, records, histories, reports, summary)


def run_matrix(cfg: ExperimentConfig, out_dir: Optional[Path] = None) -> List[MetricsRecord]:
    return run_experiment(cfg, out_dir).records


def train_bank(cfg: ExperimentConfig, strategy: str, alpha: float, seed: int, out_dir: Optional[Path] = None) -> Path:
    """Train and save one generator (bank) without running augmentation."""
    if strategy not in GAN_STRATEGIES:
        raise ConfigError(f"strategy {strategy!r} does not train a generator")
    target = prepare_output_dir(Path(out_dir or cfg.output_dir), cfg)
    store = RunStore(cfg, target)
    cell = prepare_cell(cfg, load_dataset_for(cfg, store), alpha, seed)
    sampler, logs = train_sampler(cfg, cell, strategy)
    with DBSession(store.engine) as db:
        crud.record_round_logs(db, store.experiment_id, None, logs)
        groups = grouping_outcome(logs, cfg.grouping)
        if groups:
            crud.log_audit(db, store.experiment_id, "grouping", {"cell": cell_key(strategy, alpha, seed), "groups": groups})
    path = store.write_bank(sampler, cell, strategy, cfg.dataset.name).parent
    store.finish()
    return path


def cell_for_bank(cfg: ExperimentConfig, bank_dir: Path) -> Tuple[Sampler, Dict[str, Any], CellData]:
    """Rebuild the federation a saved bank was trained on and check it still matches."""
    sampler, index = load_bank(bank_dir)
    cell = prepare_cell(cfg, load_configured_dataset(cfg.dataset), float(index["alpha"]), int(index["seed"]))
    saved = bank_dir / "metadata.json"
    if saved.exists() and load_metadata(saved) != cell.gm:
        raise ContractError(f"{bank_dir} was trained on a different federation than this config produces")
    return sampler, index, cell


def augment_from_bank(cfg: ExperimentConfig, bank_dir: Path, out_dir: Optional[Path] = None) -> CellResult:
    sampler, index, cell = cell_for_bank(cfg, bank_dir)
    target = prepare_output_dir(Path(out_dir or cfg.output_dir), cfg)
    store = RunStore(cfg, target)
    result = run_cell(cfg, cell, str(index["strategy"]), sampler=sampler)
    result.sampler = None
    store.write_cell(result, cell)
    store.finish()
    return result


def efficacy_from_bank(cfg: ExperimentConfig, bank_dir: Path) -> EfficacyReport:
    sampler, index, cell = cell_for_bank(cfg, bank_dir)
    report = _efficacy(cfg, cell, sampler, str(index["strategy"]))
    if report is None:
        raise ContractError(f"{bank_dir} produced no synthetic rows")
    return report


def load_run(out_dir: Path) -> Tuple[List[MetricsRecord], Dict[str, AugmentationHistory], List[EfficacyReport]]:
    """Read the per-cell files written by ``RunStore.write_cell``."""
    records: List[MetricsRecord] = []
    histories: Dict[str, AugmentationHistory] = {}
    reports: List[EfficacyReport] = []
    for path in sorted((out_dir / "cells").glob("*.json")):
        payload = json.loads(path.read_text(encoding="utf-8"))
        records.append(MetricsRecord(**payload["record"]))
        if payload.get("history"):
            histories[path.stem] = history_from_dict(payload["history"])
        if payload.get("efficacy"):
            reports.append(EfficacyReport(**payload["efficacy"]))
    return records, histories, reports


__all__ = [
    "CellData",
    "CellResult",
    "ExperimentResult",
    "cell_key",
    "grouping_outcome",
    "history_to_dict",
    "history_from_dict",
    "prepare_output_dir",
    "prepare_cell",
    "train_sampler",
    "run_cell",
    "RunStore",
    "run_experiment",
    "run_matrix",
    "train_bank",
    "cell_for_bank",
    "augment_from_bank",
    "efficacy_from_bank",
    "load_run",
]
