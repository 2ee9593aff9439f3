"""
Split-level prediction and scoring.

Splits are scored concurrently, each on its own deep copy of the model, with at
most ``settings.DTR_THREADS`` workers.
"""

from __future__ import annotations

import copy
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.core.config import settings
from app.core.exceptions import DataValidationError
from app.core.logging import get_logger
from app.data.windows import BatchLoader
from app.models.config import TrainConfig
from app.models.traffic import PreparedDataset
from app.nn.dtrformer import DTRformer
from app.services.baseline import hi_baseline
from app.services.metrics import (
    MetricReport,
    TaylorStats,
    evaluate,
    format_report,
    metric_rows,
    taylor_breakdown,
    taylor_rows,
    write_metrics_csv,
    write_taylor_csv,
)

logger = get_logger(__name__)


@dataclass
class SplitEvaluation:
    split: str
    report: MetricReport
    taylor: dict[str, TaylorStats] = field(default_factory=dict)
    predictions: Optional[np.ndarray] = field(default=None, repr=False)
    targets: Optional[np.ndarray] = field(default=None, repr=False)
    node_correlation: Optional[np.ndarray] = field(default=None, repr=False)


def _forward_split(model: DTRformer, dataset: PreparedDataset, split: str, batch_size: int) -> Iterator[tuple]:
    """Eval-mode forward passes over ``split``; the model's previous mode is restored afterwards."""
    was_training = model.training
    model.eval()
    loader = BatchLoader(dataset, split, batch_size, shuffle=False, c_out=model.config.c_out, prefetch=0)
    try:
        for batch in loader:
            yield batch, model.predict(batch, dataset.graph, dataset.stats).data.astype(np.float64)
    finally:
        model.train(was_training)


def predict_split(
    model: DTRformer, dataset: PreparedDataset, split: str, batch_size: int = 64
) -> tuple[np.ndarray, np.ndarray]:
    """De-normalized predictions and targets for every window of ``split``: (S, T', N, C_out) each."""
    preds, targets = [], []
    for batch, prediction in _forward_split(model, dataset, split, batch_size):
        preds.append(prediction)
        targets.append(batch.y.astype(np.float64))
    return np.concatenate(preds), np.concatenate(targets)


def node_correlation(
    model: DTRformer, dataset: PreparedDataset, split: str = "test", batch_size: int = 64
) -> np.ndarray:
    """
    Sensor-to-sensor attention of the last AR-MSA layer, averaged over
    windows, time steps and heads.

    Returns:
        (N, N) matrix; row i is how sensor i weights every sensor, so each
        row sums to 1.
    """
    attention = model.graph_fusion.armsa.layers[-1].attention
    total = np.zeros((dataset.n_nodes, dataset.n_nodes), dtype=np.float64)
    count = 0
    for _ in _forward_split(model, dataset, split, batch_size):
        weights = attention.last_weights  # (B, T, h, N, N)
        total += weights.sum(axis=(0, 1, 2), dtype=np.float64)
        count += int(np.prod(weights.shape[:3]))
    if count == 0:
        raise DataValidationError(f"{split} split has no windows")
    return total / count


def predict_baseline(
    dataset: PreparedDataset, split: str, t_out: int, c_out: int, batch_size: int = 64
) -> tuple[np.ndarray, np.ndarray]:
    loader = BatchLoader(dataset, split, batch_size, shuffle=False, c_out=c_out, prefetch=0)
    preds, targets = [], []
    for batch in loader:
        preds.append(hi_baseline(batch, dataset.stats, t_out=t_out, c_out=c_out))
        targets.append(batch.y.astype(np.float64))
    return np.concatenate(preds), np.concatenate(targets)


def validation_mae(model: DTRformer, dataset: PreparedDataset, batch_size: int = 64) -> float:
    predictions, targets = predict_split(model, dataset, "val", batch_size)
    return float(np.mean(np.abs(predictions - targets)))


def _score(
    split: str,
    forecast: Callable[[], tuple[np.ndarray, np.ndarray]],
    mape_floor: float,
    keep_arrays: bool,
) -> SplitEvaluation:
    predictions, targets = forecast()
    result = SplitEvaluation(
        split=split,
        report=evaluate(predictions, targets, mape_floor=mape_floor),
        taylor=taylor_breakdown(predictions, targets),
    )
    if keep_arrays:
        result.predictions, result.targets = predictions, targets
    logger.info(format_report(result.report, label=split))
    return result


def _run_parallel(
    jobs: dict[str, Callable[[], SplitEvaluation]], max_workers: Optional[int]
) -> dict[str, SplitEvaluation]:
    workers = max(1, min(max_workers or settings.DTR_THREADS, len(jobs)))
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="eval") as pool:
        futures = {split: pool.submit(job) for split, job in jobs.items()}
        return {split: future.result() for split, future in futures.items()}


def _score_model(
    model: DTRformer,
    dataset: PreparedDataset,
    split: str,
    config: TrainConfig,
    keep_arrays: bool,
    with_correlation: bool,
) -> SplitEvaluation:
    result = _score(
        split, lambda: predict_split(model, dataset, split, config.eval_batch_size), config.mape_floor, keep_arrays
    )
    if with_correlation:
        result.node_correlation = node_correlation(model, dataset, split, config.eval_batch_size)
    return result


def evaluate_model(
    model: DTRformer,
    dataset: PreparedDataset,
    config: TrainConfig,
    splits: Sequence[str] = ("val", "test"),
    max_workers: Optional[int] = None,
    keep_arrays: bool = False,
    correlation_split: Optional[str] = "test",
) -> dict[str, SplitEvaluation]:
    """
    Score ``model`` on each non-empty split using independent replicas.

    The result for ``correlation_split`` also carries the mean sensor-to-sensor
    attention matrix (see ``node_correlation``).
    """
    jobs = {}
    for split in splits:
        if dataset.splits[split].size == 0:
            logger.warning("Split %s has no windows; skipped", split)
            continue
        jobs[split] = (
            lambda s=split, m=copy.deepcopy(model): _score_model(
                m, dataset, s, config, keep_arrays, with_correlation=s == correlation_split
            )
        )
    return _run_parallel(jobs, max_workers)


def evaluate_baseline(
    dataset: PreparedDataset,
    config: TrainConfig,
    splits: Sequence[str] = ("val", "test"),
    max_workers: Optional[int] = None,
) -> dict[str, SplitEvaluation]:
    jobs = {}
    for split in splits:
        if dataset.splits[split].size == 0:
            continue
        jobs[split] = (
            lambda s=split: _score(
                s,
                lambda: predict_baseline(dataset, s, config.t_out, config.c_out, config.eval_batch_size),
                config.mape_floor,
                False,
            )
        )
    return _run_parallel(jobs, max_workers)


def write_node_correlation_csv(path: Union[str, Path], matrix: np.ndarray) -> Path:
    """Long-format sensor matrix: source, target, weight."""
    source, target = np.indices(matrix.shape).reshape(2, -1)
    frame = pd.DataFrame({"source": source, "target": target, "weight": matrix.reshape(-1)})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def export_evaluations(out_dir: Union[str, Path], results: dict[str, SplitEvaluation]) -> list[Path]:
    """Write ``metrics.csv`` and ``taylor.csv``, plus ``node_correlation.csv`` when a result carries one."""
    out_dir = Path(out_dir)
    metrics_rows, taylor = [], []
    correlation = None
    for split, result in results.items():
        metrics_rows.extend(metric_rows(split, result.report))
        taylor.extend(taylor_rows(split, result.taylor))
        if result.node_correlation is not None:
            correlation = result.node_correlation
    written = [
        write_metrics_csv(out_dir / "metrics.csv", metrics_rows),
        write_taylor_csv(out_dir / "taylor.csv", taylor),
    ]
    if correlation is not None:
        written.append(write_node_correlation_csv(out_dir / "node_correlation.csv", correlation))
    return written


def write_predictions_csv(path: Union[str, Path], predictions: np.ndarray, targets: np.ndarray) -> Path:
    """Long-format export: sample, horizon (1-based), node, channel, prediction, target."""
    sample, horizon, node, channel = np.indices(predictions.shape).reshape(4, -1)
    frame = pd.DataFrame(
        {
            "sample": sample,
            "horizon": horizon + 1,
            "node": node,
            "channel": channel,
            "prediction": predictions.reshape(-1),
            "target": targets.reshape(-1),
        }
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path
