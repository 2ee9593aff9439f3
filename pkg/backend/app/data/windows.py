"""
Sliding windows, calendar indices and mini-batch iteration.
"""

from __future__ import annotations

import queue
import threading
from typing import Iterator, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.core.config import settings
from app.core.exceptions import DataValidationError
from app.core.logging import get_logger
from app.data.normalization import split_lengths
from app.models.traffic import SECONDS_PER_DAY, SPLIT_NAMES, PreparedDataset, SampleBatch, WindowSplits

logger = get_logger(__name__)

IndexLike = Union[int, Sequence[int], np.ndarray]


def calendar_indices(start_epoch: int, step_seconds: int, step_index: IndexLike) -> tuple:
    """
    Time-of-day slot and day-of-week (Monday = 0) for steps of a UTC series.

    Scalars in, ints out; arrays in, int64 arrays out.
    """
    if step_seconds <= 0 or SECONDS_PER_DAY % step_seconds != 0:
        raise DataValidationError(f"step_seconds={step_seconds} must be positive and divide 86400")
    scalar = np.ndim(step_index) == 0
    steps = np.atleast_1d(np.asarray(step_index, dtype=np.int64))
    stamps = pd.DatetimeIndex(pd.to_datetime(int(start_epoch) + steps * int(step_seconds), unit="s", utc=True))
    seconds_of_day = stamps.hour.to_numpy() * 3600 + stamps.minute.to_numpy() * 60 + stamps.second.to_numpy()
    tod = (seconds_of_day // step_seconds).astype(np.int64)
    dow = stamps.dayofweek.to_numpy().astype(np.int64)
    if scalar:
        return int(tod[0]), int(dow[0])
    return tod.reshape(steps.shape), dow.reshape(steps.shape)


def count_windows(length: int, t_in: int = 12, t_out: int = 12) -> int:
    return max(length - t_in - t_out + 1, 0)


def make_windows(
    n_steps: int,
    t_in: int = 12,
    t_out: int = 12,
    ratios: Sequence[float] = (0.6, 0.2, 0.2),
) -> WindowSplits:
    """
    Cut the series into chronological train/val/test segments and list every
    stride-1 window start that fits entirely inside its segment.

    Raises:
        DataValidationError: a split with a positive ratio cannot hold one window.
    """
    lengths = split_lengths(n_steps, ratios)
    starts: dict[str, np.ndarray] = {}
    bounds: dict[str, tuple[int, int]] = {}
    offset = 0
    for name, ratio, length in zip(SPLIT_NAMES, ratios, lengths):
        bounds[name] = (offset, offset + length)
        count = count_windows(length, t_in, t_out)
        if ratio > 0 and count < 1:
            raise DataValidationError(
                f"{name} split has {length} steps, fewer than one window needs ({t_in + t_out})"
            )
        starts[name] = offset + np.arange(count, dtype=np.int64)
        offset += length
    logger.debug("Windows per split: %s", {k: int(v.size) for k, v in starts.items()})
    return WindowSplits(**starts, bounds=bounds, t_in=t_in, t_out=t_out)


def assemble_batch(dataset: PreparedDataset, starts: np.ndarray, c_out: int = 1) -> SampleBatch:
    """Gather windows starting at ``starts`` into one batch."""
    t_in, t_out = dataset.splits.t_in, dataset.splits.t_out
    starts = np.asarray(starts, dtype=np.int64)
    in_idx = starts[:, None] + np.arange(t_in)
    out_idx = starts[:, None] + t_in + np.arange(t_out)
    return SampleBatch(
        x=dataset.normalized.values[in_idx],
        y=dataset.raw.values[out_idx][..., :c_out],
        tod=dataset.tod[in_idx],
        dow=dataset.dow[in_idx],
        starts=starts,
    )


_DONE = object()


class BatchLoader:
    """
    Iterates mini-batches of one split.

    Training order is a permutation seeded by (seed, epoch); evaluation order
    is chronological. With ``prefetch > 0`` batches are assembled on a
    background thread into a bounded queue; the order is unchanged.
    """

    def __init__(
        self,
        dataset: PreparedDataset,
        split: str,
        batch_size: int,
        shuffle: bool = False,
        seed: int = 0,
        c_out: int = 1,
        prefetch: Optional[int] = None,
    ):
        self.dataset = dataset
        self.split = split
        self.starts = dataset.splits[split]
        self.batch_size = batch_size
        self.shuffle = shuffle
        self.seed = seed
        self.c_out = c_out
        self.prefetch = settings.DTR_PREFETCH if prefetch is None else prefetch

    def __len__(self) -> int:
        return -(-self.starts.size // self.batch_size)

    def order(self, epoch: int = 0) -> np.ndarray:
        if not self.shuffle:
            return self.starts
        rng = np.random.default_rng([self.seed, epoch])
        return rng.permutation(self.starts)

    def _generate(self, epoch: int) -> Iterator[SampleBatch]:
        order = self.order(epoch)
        for begin in range(0, order.size, self.batch_size):
            yield assemble_batch(self.dataset, order[begin:begin + self.batch_size], self.c_out)

    def epoch(self, epoch: int = 0) -> Iterator[SampleBatch]:
        if self.prefetch <= 0:
            yield from self._generate(epoch)
            return

        buffer: queue.Queue = queue.Queue(maxsize=self.prefetch)
        stop = threading.Event()

        def produce() -> None:
            try:
                for batch in self._generate(epoch):
                    while not stop.is_set():
                        try:
                            buffer.put(batch, timeout=0.1)
                            break
                        except queue.Full:
                            continue
                    if stop.is_set():
                        return
                item: object = _DONE
            except Exception as exc:  # surfaced on the consumer side
                item = exc
            while not stop.is_set():
                try:
                    buffer.put(item, timeout=0.1)
                    return
                except queue.Full:
                    continue

        worker = threading.Thread(target=produce, name=f"prefetch-{self.split}", daemon=True)
        worker.start()
        try:
            while True:
                item = buffer.get()
                if item is _DONE:
                    break
                if isinstance(item, Exception):
                    raise item
                yield item
        finally:
            stop.set()
            worker.join(timeout=1.0)

    def __iter__(self) -> Iterator[SampleBatch]:
        return self.epoch(0)
