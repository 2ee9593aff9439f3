"""
Data containers for traffic series, normalization statistics, batches and graphs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from app.core.exceptions import DataValidationError

SECONDS_PER_DAY = 86400
STD_FLOOR = 1e-8
SPLIT_NAMES = ("train", "val", "test")


@dataclass
class TrafficSeries:
    """Raw or normalized sensor readings shaped (T_total, N, C)."""

    values: np.ndarray
    start_epoch: int = 0
    step_seconds: int = 300

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 3:
            raise DataValidationError(f"traffic series must be (T, N, C), got shape {self.values.shape}")
        if self.values.size == 0:
            raise DataValidationError("traffic series is empty")
        if self.step_seconds <= 0 or SECONDS_PER_DAY % self.step_seconds != 0:
            raise DataValidationError(f"step_seconds={self.step_seconds} must be positive and divide 86400")
        self.start_epoch = int(self.start_epoch)
        self.step_seconds = int(self.step_seconds)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.values.shape[1]

    @property
    def n_channels(self) -> int:
        return self.values.shape[2]

    @property
    def steps_per_day(self) -> int:
        return SECONDS_PER_DAY // self.step_seconds

    def with_values(self, values: np.ndarray) -> "TrafficSeries":
        return TrafficSeries(values, self.start_epoch, self.step_seconds)


@dataclass
class NormStats:
    """Per-channel z-score statistics fitted on the training split."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64).reshape(-1), STD_FLOOR)
        if self.mean.shape != self.std.shape:
            raise DataValidationError(f"mean {self.mean.shape} and std {self.std.shape} differ in length")

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse(self, values: np.ndarray) -> np.ndarray:
        """Map normalized values back to original units; the trailing axis may be a channel prefix."""
        channels = np.asarray(values).shape[-1]
        return np.asarray(values, dtype=np.float64) * self.std[:channels] + self.mean[:channels]

    def to_bytes(self) -> bytes:
        return self.mean.tobytes() + self.std.tobytes()


@dataclass
class SampleBatch:
    """
    One mini-batch of windows.

    x: (B, T, N, C) normalized inputs
    y: (B, T', N, C_out) targets in original units
    tod, dow: (B, T) calendar indices of the input steps
    starts: (B,) window start offsets into the series
    """

    x: np.ndarray
    y: np.ndarray
    tod: np.ndarray
    dow: np.ndarray
    starts: np.ndarray

    @property
    def size(self) -> int:
        return self.x.shape[0]


@dataclass
class GraphPair:
    """Row-normalized forward and backward transition matrices."""

    a_fwd: np.ndarray
    a_bwd: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.a_fwd.shape[0]


@dataclass
class WindowSplits:
    """Window start indices per split plus the raw segment bounds they were cut from."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    bounds: dict[str, tuple[int, int]] = field(default_factory=dict)
    t_in: int = 12
    t_out: int = 12

    def __getitem__(self, split: str) -> np.ndarray:
        if split not in SPLIT_NAMES:
            raise KeyError(split)
        return getattr(self, split)

    def counts(self) -> dict[str, int]:
        return {name: int(self[name].size) for name in SPLIT_NAMES}


@dataclass
class PreparedDataset:
    """Everything training and evaluation need: raw and normalized series, stats, graph, windows."""

    raw: TrafficSeries
    normalized: TrafficSeries
    stats: NormStats
    graph: GraphPair
    splits: WindowSplits
    tod: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    dow: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]

    @property
    def n_nodes(self) -> int:
        return self.raw.n_nodes

    @property
    def n_channels(self) -> int:
        return self.raw.n_channels

    @property
    def steps_per_day(self) -> int:
        return self.raw.steps_per_day
