"""
Seeded synthetic road network and traffic generator for desk-scale experiments.

Each node carries a daily sinusoid with its own base level, amplitude and
phase; weekends damp the amplitude; one smoothing pass over the row-normalized
adjacency couples neighbouring sensors; Gaussian noise is added last and the
result is clipped at zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import networkx as nx
import numpy as np

from app.core.exceptions import DataValidationError
from app.core.logging import get_logger
from app.data.adjacency import build_adjacency, transition_matrices
from app.data.traffic_io import write_adjacency_csv, write_traffic_binary
from app.data.windows import calendar_indices
from app.models.traffic import SECONDS_PER_DAY, TrafficSeries

logger = get_logger(__name__)

# Monday 2018-07-02 00:00 UTC
SYNTH_START_EPOCH = 1530489600
SMOOTHING = 0.5
KM_PER_UNIT = 10.0


@dataclass
class SyntheticDataset:
    series: TrafficSeries
    edges: list[tuple[int, int, float]]
    positions: np.ndarray


def synth_generate(
    n_nodes: int,
    n_days: int,
    seed: int,
    noise: float = 5.0,
    weekly_amplitude: float = 0.15,
    step_seconds: int = 300,
    start_epoch: int = SYNTH_START_EPOCH,
    radius: float = 0.5,
) -> SyntheticDataset:
    """
    Generate a reproducible (n_days * N_d, n_nodes, 1) flow series and its distance list.

    With ``noise=0`` the series repeats weekly; with ``weekly_amplitude=0`` as
    well it repeats daily.
    """
    if n_nodes < 2:
        raise DataValidationError(f"synthetic network needs at least 2 nodes, got {n_nodes}")
    if n_days < 1:
        raise DataValidationError(f"n_days must be positive, got {n_days}")
    if not 0.0 <= weekly_amplitude < 1.0:
        raise DataValidationError(f"weekly_amplitude must lie in [0, 1), got {weekly_amplitude}")
    if step_seconds <= 0 or SECONDS_PER_DAY % step_seconds:
        raise DataValidationError(f"step_seconds={step_seconds} must divide 86400")

    rng = np.random.default_rng(seed)
    graph = nx.random_geometric_graph(n_nodes, radius, seed=int(rng.integers(2**31 - 1)))
    positions = np.array([graph.nodes[i]["pos"] for i in range(n_nodes)], dtype=np.float64)
    edges: list[tuple[int, int, float]] = []
    for u, v in sorted(graph.edges()):
        distance = round(float(np.linalg.norm(positions[u] - positions[v])) * KM_PER_UNIT, 4)
        edges.append((u, v, distance))
        edges.append((v, u, distance))

    steps_per_day = SECONDS_PER_DAY // step_seconds
    n_steps = n_days * steps_per_day
    tod, dow = calendar_indices(start_epoch, step_seconds, np.arange(n_steps))

    base = rng.uniform(150.0, 300.0, size=n_nodes)
    amplitude = rng.uniform(30.0, 120.0, size=n_nodes)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=n_nodes)

    weekly = 1.0 - weekly_amplitude * (dow >= 5)
    angle = 2.0 * np.pi * tod[:, None] / steps_per_day + phase[None, :]
    clean = base[None, :] + amplitude[None, :] * weekly[:, None] * np.sin(angle)

    if edges:
        a_fwd = transition_matrices(build_adjacency(edges, n_nodes)).a_fwd
    else:
        a_fwd = np.eye(n_nodes)
    coupled = (1.0 - SMOOTHING) * clean + SMOOTHING * clean @ a_fwd.T

    values = coupled + noise * rng.standard_normal(size=coupled.shape)
    values = np.clip(values, 0.0, None)[:, :, None].astype(np.float32)
    logger.info(
        "Generated synthetic series: %d nodes, %d days, %d edges (noise=%.2f)",
        n_nodes,
        n_days,
        len(edges),
        noise,
    )
    return SyntheticDataset(
        series=TrafficSeries(values, start_epoch=start_epoch, step_seconds=step_seconds),
        edges=edges,
        positions=positions,
    )


def write_synthetic(out_dir: Union[str, Path], dataset: SyntheticDataset) -> tuple[Path, Path]:
    """Write ``traffic.traf`` and ``adjacency.csv`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = write_traffic_binary(out_dir / "traffic.traf", dataset.series)
    adj_path = write_adjacency_csv(out_dir / "adjacency.csv", dataset.edges)
    return data_path, adj_path
