"""
Chronological splits and z-score normalization fitted on the training segment.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from sklearn.preprocessing import StandardScaler

from app.core.exceptions import DataValidationError
from app.models.traffic import NormStats, TrafficSeries


def split_lengths(total: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    """Raw segment lengths for train/val/test; test takes the remainder."""
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise DataValidationError(f"expected three non-negative split ratios, got {tuple(ratios)}")
    if not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise DataValidationError(f"split ratios must sum to 1, got {sum(ratios)}")
    n_train = int(round(total * ratios[0]))
    n_val = min(int(round(total * ratios[1])), total - n_train)
    return n_train, n_val, total - n_train - n_val


def zscore_fit_apply(series: TrafficSeries, train_fraction: float = 0.6) -> tuple[TrafficSeries, NormStats]:
    """
    Fit per-channel mean/std on the first ``train_fraction`` of the series and
    normalize the whole series with them.

    Raises:
        DataValidationError: when the training segment is empty.
    """
    if series.values.size == 0:
        raise DataValidationError("cannot normalize an empty series")
    n_train = int(round(series.n_steps * train_fraction))
    if n_train < 1:
        raise DataValidationError(f"training split is empty (fraction {train_fraction} of {series.n_steps} steps)")

    train = series.values[:n_train].reshape(-1, series.n_channels).astype(np.float64)
    scaler = StandardScaler().fit(train)
    # StandardScaler replaces zero variance with scale 1; the floor keeps constant channels at zero instead
    stats = NormStats(mean=scaler.mean_, std=np.sqrt(scaler.var_))
    normalized = stats.transform(series.values).astype(np.float32)
    return series.with_values(normalized), stats
