"""
End-to-end preparation: raw series + distance list -> PreparedDataset, and its
``prepared.npz`` persistence.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Union

import numpy as np

from app.core.exceptions import DataValidationError
from app.core.logging import get_logger
from app.data.adjacency import build_adjacency, transition_matrices
from app.data.normalization import zscore_fit_apply
from app.data.windows import calendar_indices, make_windows
from app.models.config import TrainConfig
from app.models.traffic import GraphPair, NormStats, PreparedDataset, TrafficSeries

logger = get_logger(__name__)

PathLike = Union[str, Path]


def prepare_dataset(
    series: TrafficSeries,
    edges: Iterable[tuple[int, int, float]],
    config: TrainConfig,
) -> PreparedDataset:
    if config.n_d is not None and config.n_d != series.steps_per_day:
        raise DataValidationError(
            f"n_d={config.n_d} disagrees with the series step ({series.steps_per_day} steps per day)"
        )
    if config.c_out > series.n_channels:
        raise DataValidationError(f"c_out={config.c_out} exceeds the {series.n_channels} input channels")
    splits = make_windows(series.n_steps, config.t_in, config.t_out, config.ratios)
    normalized, stats = zscore_fit_apply(series, config.train_ratio)
    adjacency = build_adjacency(edges, series.n_nodes, sigma=config.sigma, theta=config.theta)
    tod, dow = calendar_indices(series.start_epoch, series.step_seconds, np.arange(series.n_steps))
    dataset = PreparedDataset(
        raw=series,
        normalized=normalized,
        stats=stats,
        graph=transition_matrices(adjacency),
        splits=splits,
        tod=tod,
        dow=dow,
    )
    logger.info(
        "Prepared %d steps x %d nodes x %d channels, windows %s",
        series.n_steps,
        series.n_nodes,
        series.n_channels,
        splits.counts(),
    )
    return dataset


def save_prepared(path: PathLike, dataset: PreparedDataset) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    counts = dataset.splits.counts()
    bounds = np.array([dataset.splits.bounds[name] for name in ("train", "val", "test")], dtype=np.int64)
    with path.open("wb") as fh:
        np.savez(
            fh,
            raw=dataset.raw.values,
            normalized=dataset.normalized.values,
            mean=dataset.stats.mean,
            std=dataset.stats.std,
            a_fwd=dataset.graph.a_fwd,
            a_bwd=dataset.graph.a_bwd,
            start_epoch=np.int64(dataset.raw.start_epoch),
            step_seconds=np.int64(dataset.raw.step_seconds),
            t_in=np.int64(dataset.splits.t_in),
            t_out=np.int64(dataset.splits.t_out),
            bounds=bounds,
            window_counts=np.array([counts["train"], counts["val"], counts["test"]], dtype=np.int64),
        )
    return path


def load_prepared(path: PathLike) -> PreparedDataset:
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"prepared dataset not found: {path}")
    with np.load(path) as archive:
        raw = TrafficSeries(archive["raw"], int(archive["start_epoch"]), int(archive["step_seconds"]))
        normalized = raw.with_values(archive["normalized"])
        stats = NormStats(archive["mean"], archive["std"])
        graph = GraphPair(archive["a_fwd"], archive["a_bwd"])
        t_in, t_out = int(archive["t_in"]), int(archive["t_out"])
        bounds = archive["bounds"]
        saved_counts = archive["window_counts"].tolist() if "window_counts" in archive.files else None
    lengths = bounds[:, 1] - bounds[:, 0]
    ratios = tuple(float(v) for v in lengths / lengths.sum())
    splits = make_windows(raw.n_steps, t_in, t_out, ratios)
    counts = splits.counts()
    rebuilt = [counts["train"], counts["val"], counts["test"]]
    if saved_counts is not None and saved_counts != rebuilt:
        raise DataValidationError(f"{path}: stored window counts {saved_counts} disagree with the bounds ({rebuilt})")
    tod, dow = calendar_indices(raw.start_epoch, raw.step_seconds, np.arange(raw.n_steps))
    return PreparedDataset(raw=raw, normalized=normalized, stats=stats, graph=graph, splits=splits, tod=tod, dow=dow)
