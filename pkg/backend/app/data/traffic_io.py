"""
Readers and writers for traffic series and distance lists.

Formats:
    - Traffic binary: b"TRAF1\\n", u32 T, N, C, i64 start_epoch, u32 step_seconds,
      then float32 values row-major [t][n][c], all little-endian.
    - Traffic CSV: columns ``t,n,c,value`` covering every cell exactly once.
    - PEMS ``.npz``: a ``data`` array shaped (T, N) or (T, N, C).
    - Adjacency CSV: ``from,to,distance`` rows with 0-based ids, optional header.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.core.exceptions import DataValidationError
from app.core.logging import get_logger
from app.models.traffic import TrafficSeries

logger = get_logger(__name__)

TRAFFIC_MAGIC = b"TRAF1\n"
_HEADER = struct.Struct("<IIIqI")

PathLike = Union[str, Path]
Edge = tuple[int, int, float]


@dataclass(frozen=True)
class PemsDataset:
    """Public PEMS benchmark metadata."""

    name: str
    nodes: int
    samples: int
    step_seconds: int = 300


PEMS_DATASETS: dict[str, PemsDataset] = {
    "PEMS03": PemsDataset("PEMS03", nodes=358, samples=26208),
    "PEMS04": PemsDataset("PEMS04", nodes=307, samples=16992),
    "PEMS07": PemsDataset("PEMS07", nodes=883, samples=28224),
    "PEMS08": PemsDataset("PEMS08", nodes=170, samples=17856),
}


# traffic binary

def write_traffic_binary(path: PathLike, series: TrafficSeries) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    t, n, c = series.values.shape
    header = TRAFFIC_MAGIC + _HEADER.pack(t, n, c, series.start_epoch, series.step_seconds)
    path.write_bytes(header + np.ascontiguousarray(series.values, dtype="<f4").tobytes())
    return path


def read_traffic_binary(path: PathLike) -> TrafficSeries:
    payload = Path(path).read_bytes()
    if not payload.startswith(TRAFFIC_MAGIC):
        raise DataValidationError(f"{path}: not a TRAF1 traffic file (bad magic)")
    offset = len(TRAFFIC_MAGIC)
    if len(payload) < offset + _HEADER.size:
        raise DataValidationError(f"{path}: truncated header")
    t, n, c, start_epoch, step_seconds = _HEADER.unpack_from(payload, offset)
    offset += _HEADER.size
    expected = t * n * c * 4
    if len(payload) - offset != expected:
        raise DataValidationError(
            f"{path}: expected {expected} data bytes for shape ({t}, {n}, {c}), found {len(payload) - offset}"
        )
    values = np.frombuffer(payload, dtype="<f4", offset=offset).reshape(t, n, c)
    return TrafficSeries(values.astype(np.float32), start_epoch=start_epoch, step_seconds=step_seconds)


# traffic CSV

def write_traffic_csv(path: PathLike, series: TrafficSeries) -> Path:
    t, n, c = np.indices(series.values.shape).reshape(3, -1)
    frame = pd.DataFrame({"t": t, "n": n, "c": c, "value": series.values.reshape(-1)})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def read_traffic_csv(path: PathLike, start_epoch: int = 0, step_seconds: int = 300) -> TrafficSeries:
    frame = pd.read_csv(path)
    missing = {"t", "n", "c", "value"} - set(frame.columns)
    if missing:
        raise DataValidationError(f"{path}: traffic CSV lacks columns {sorted(missing)}")
    if frame.empty:
        raise DataValidationError(f"{path}: traffic CSV has no rows")
    idx = frame[["t", "n", "c"]].to_numpy(dtype=np.int64)
    if (idx < 0).any():
        raise DataValidationError(f"{path}: negative t/n/c index")
    shape = tuple(int(v) + 1 for v in idx.max(axis=0))
    if frame.duplicated(subset=["t", "n", "c"]).any():
        raise DataValidationError(f"{path}: duplicate (t, n, c) cells")
    if len(frame) != int(np.prod(shape)):
        raise DataValidationError(f"{path}: {len(frame)} rows do not cover the full {shape} grid")
    values = np.empty(shape, dtype=np.float32)
    values[idx[:, 0], idx[:, 1], idx[:, 2]] = frame["value"].to_numpy(dtype=np.float32)
    return TrafficSeries(values, start_epoch=start_epoch, step_seconds=step_seconds)


# PEMS npz

def load_pems_npz(
    path: PathLike,
    channels: Optional[Sequence[int]] = None,
    start_epoch: int = 0,
    step_seconds: int = 300,
) -> TrafficSeries:
    """Load a PEMS ``.npz`` archive; 2-D arrays gain a trailing channel axis."""
    with np.load(path) as archive:
        if "data" not in archive:
            raise DataValidationError(f"{path}: npz archive has no 'data' array")
        data = np.asarray(archive["data"], dtype=np.float32)
    if data.ndim == 2:
        data = np.expand_dims(data, axis=-1)
    if channels is not None:
        data = data[:, :, list(channels)]
    known = next((meta for meta in PEMS_DATASETS.values() if meta.nodes == data.shape[1]), None)
    logger.info(
        "Loaded %s shaped %s (max %.1f, mean %.2f)",
        known.name if known else Path(path).name,
        data.shape,
        float(data.max()),
        float(data.mean()),
    )
    return TrafficSeries(data, start_epoch=start_epoch, step_seconds=step_seconds)


def read_traffic(path: PathLike, start_epoch: int = 0, step_seconds: int = 300) -> TrafficSeries:
    """Dispatch on file suffix: ``.csv``, ``.npz``, otherwise the binary format."""
    suffix = Path(path).suffix.lower()
    if not Path(path).exists():
        raise DataValidationError(f"traffic file not found: {path}")
    if suffix == ".csv":
        return read_traffic_csv(path, start_epoch=start_epoch, step_seconds=step_seconds)
    if suffix == ".npz":
        return load_pems_npz(path, start_epoch=start_epoch, step_seconds=step_seconds)
    return read_traffic_binary(path)


# adjacency CSV

def read_edges_csv(path: PathLike) -> list[Edge]:
    """Read ``from,to,distance`` rows; a non-numeric first row is treated as a header."""
    if not Path(path).exists():
        raise DataValidationError(f"adjacency file not found: {path}")
    try:
        frame = pd.read_csv(path, header=None, comment="#", skipinitialspace=True)
    except pd.errors.EmptyDataError:
        return []
    if frame.shape[1] < 3:
        raise DataValidationError(f"{path}: expected 3 columns (from, to, distance), found {frame.shape[1]}")
    frame = frame.iloc[:, :3]
    if frame.empty:
        return []
    if pd.to_numeric(frame.iloc[0], errors="coerce").isna().any():
        frame = frame.iloc[1:]
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    if numeric.isna().any().any():
        raise DataValidationError(f"{path}: non-numeric adjacency entries")
    ids = numeric.iloc[:, :2].to_numpy(dtype=np.float64)
    if not np.all(ids == np.round(ids)):
        raise DataValidationError(f"{path}: node ids must be integers")
    return [(int(a), int(b), float(d)) for a, b, d in numeric.itertuples(index=False, name=None)]


def write_adjacency_csv(path: PathLike, edges: Iterable[Edge]) -> Path:
    frame = pd.DataFrame(list(edges), columns=["from", "to", "distance"])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path
