"""Historical Inertia (persistence) reference forecaster."""

from __future__ import annotations

import numpy as np

from app.models.traffic import NormStats, SampleBatch


def hi_baseline(batch: SampleBatch, stats: NormStats, t_out: int = 12, c_out: int = 1) -> np.ndarray:
    """Repeat the last observed input step over the horizon, in original units: (B, t_out, N, c_out)."""
    last = stats.inverse(batch.x[:, -1, :, :c_out])
    return np.repeat(last[:, None], t_out, axis=1)
