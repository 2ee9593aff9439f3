"""
Forecast error metrics and their CSV exports.

Metrics are computed in float64 on original units:
    MAE  = mean |e|
    RMSE = sqrt(mean e²)
    MAPE = mean |e| / |y| over targets with |y| > floor, in percent
    NSE  = 1 - Σe² / Σ(y - ȳ)²
Undefined values (no target above the floor, zero target variance) are NaN
and exported as ``undefined``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.core.exceptions import ShapeMismatchError
from app.tensor import ops
from app.tensor.tensor import Tensor

DEFAULT_MAPE_FLOOR = 10.0
DEFAULT_HORIZONS = (3, 6, 12)
UNDEFINED = "undefined"
METRIC_COLUMNS = ["split", "horizon", "mae", "rmse", "mape", "nse"]
TAYLOR_COLUMNS = ["split", "horizon", "obs_std", "pred_std", "correlation"]


@dataclass
class MetricReport:
    """Pooled metrics plus an optional per-horizon breakdown keyed by step (1-based)."""

    mae: float
    rmse: float
    mape: float
    nse: float
    per_horizon: dict[int, "MetricReport"] = field(default_factory=dict)

    @property
    def mape_defined(self) -> bool:
        return not np.isnan(self.mape)


@dataclass
class TaylorStats:
    obs_std: float
    pred_std: float
    correlation: float


def mae_loss(prediction: Tensor, target: Union[Tensor, np.ndarray]) -> Tensor:
    """Differentiable mean absolute error over every element."""
    return ops.mae(prediction, target)


def _pair(prediction: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise ShapeMismatchError(f"prediction {prediction.shape} and target {target.shape} differ")
    if prediction.size == 0:
        raise ShapeMismatchError("cannot score empty arrays")
    return prediction, target


def compute_metrics(prediction: np.ndarray, target: np.ndarray, mape_floor: float = DEFAULT_MAPE_FLOOR) -> MetricReport:
    prediction, target = _pair(prediction, target)
    error = prediction - target
    abs_error = np.abs(error)
    squared = error * error

    mask = np.abs(target) > mape_floor
    mape = float(np.mean(abs_error[mask] / np.abs(target[mask])) * 100.0) if mask.any() else float("nan")

    spread = float(np.sum((target - target.mean()) ** 2))
    nse = 1.0 - float(np.sum(squared)) / spread if spread > 0 else float("nan")

    return MetricReport(
        mae=float(np.mean(abs_error)),
        rmse=float(np.sqrt(np.mean(squared))),
        mape=mape,
        nse=nse,
    )


def evaluate(
    prediction: np.ndarray,
    target: np.ndarray,
    mape_floor: float = DEFAULT_MAPE_FLOOR,
    horizons: Sequence[int] = DEFAULT_HORIZONS,
) -> MetricReport:
    """
    Score predictions against targets.

    For 4-d (B, T', N, C) inputs the report also carries metrics at each
    requested horizon step that exists.
    """
    prediction, target = _pair(prediction, target)
    report = compute_metrics(prediction, target, mape_floor)
    if prediction.ndim == 4:
        for step in horizons:
            if 1 <= step <= prediction.shape[1]:
                report.per_horizon[step] = compute_metrics(
                    prediction[:, step - 1], target[:, step - 1], mape_floor
                )
    return report


def taylor_stats(prediction: np.ndarray, target: np.ndarray) -> TaylorStats:
    prediction, target = _pair(prediction, target)
    obs_std = float(np.std(target))
    pred_std = float(np.std(prediction))
    if obs_std > 0 and pred_std > 0:
        correlation = float(np.corrcoef(prediction.reshape(-1), target.reshape(-1))[0, 1])
    else:
        correlation = float("nan")
    return TaylorStats(obs_std=obs_std, pred_std=pred_std, correlation=correlation)


def taylor_breakdown(
    prediction: np.ndarray, target: np.ndarray, horizons: Sequence[int] = DEFAULT_HORIZONS
) -> dict[str, TaylorStats]:
    stats = {"all": taylor_stats(prediction, target)}
    if np.ndim(prediction) == 4:
        for step in horizons:
            if 1 <= step <= prediction.shape[1]:
                stats[str(step)] = taylor_stats(prediction[:, step - 1], target[:, step - 1])
    return stats


def metric_rows(split: str, report: MetricReport) -> list[dict]:
    rows = [{"split": split, "horizon": "all", "mae": report.mae, "rmse": report.rmse,
             "mape": report.mape, "nse": report.nse}]
    for step, sub in sorted(report.per_horizon.items()):
        rows.append({"split": split, "horizon": str(step), "mae": sub.mae, "rmse": sub.rmse,
                     "mape": sub.mape, "nse": sub.nse})
    return rows


def taylor_rows(split: str, stats: dict[str, TaylorStats]) -> list[dict]:
    return [
        {"split": split, "horizon": horizon, "obs_std": s.obs_std, "pred_std": s.pred_std,
         "correlation": s.correlation}
        for horizon, s in stats.items()
    ]


def _write_rows(path: Union[str, Path], rows: Iterable[dict], columns: list[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(list(rows), columns=columns)
    frame.to_csv(path, index=False, na_rep=UNDEFINED)
    return path


def write_metrics_csv(path: Union[str, Path], rows: Iterable[dict]) -> Path:
    return _write_rows(path, rows, METRIC_COLUMNS)


def write_taylor_csv(path: Union[str, Path], rows: Iterable[dict]) -> Path:
    return _write_rows(path, rows, TAYLOR_COLUMNS)


def read_metrics_csv(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, na_values=[UNDEFINED], dtype={"horizon": str})


def format_report(report: MetricReport, label: Optional[str] = None) -> str:
    mape = f"{report.mape:.2f}%" if report.mape_defined else UNDEFINED
    prefix = f"{label}: " if label else ""
    return f"{prefix}MAE {report.mae:.4f}  RMSE {report.rmse:.4f}  MAPE {mape}  NSE {report.nse:.4f}"
