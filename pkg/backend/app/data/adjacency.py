"""
Gaussian-kernel road-network adjacency and its transition matrices.
"""

from __future__ import annotations

from typing import Iterable, Optional

import networkx as nx
import numpy as np

from app.core.exceptions import DataValidationError
from app.core.logging import get_logger
from app.models.traffic import GraphPair

logger = get_logger(__name__)

DEFAULT_THETA = 0.1


def _distance_graph(edges: Iterable[tuple[int, int, float]], n: int) -> nx.DiGraph:
    graph = nx.DiGraph()
    graph.add_nodes_from(range(n))
    for src, dst, distance in edges:
        if not (0 <= src < n and 0 <= dst < n):
            raise DataValidationError(f"edge ({src}, {dst}) has a node id outside [0, {n})")
        if not np.isfinite(distance) or distance < 0:
            raise DataValidationError(f"edge ({src}, {dst}) has invalid distance {distance}")
        if graph.has_edge(src, dst):
            known = graph.edges[src, dst]["distance"]
            if known != distance:
                raise DataValidationError(
                    f"duplicate edge ({src}, {dst}) with conflicting distances {known} and {distance}"
                )
            continue
        graph.add_edge(src, dst, distance=float(distance))
    return graph


def build_adjacency(
    edges: Iterable[tuple[int, int, float]],
    n: int,
    sigma: Optional[float] = None,
    theta: float = DEFAULT_THETA,
) -> np.ndarray:
    """
    Thresholded Gaussian kernel adjacency.

    A[i, j] = exp(-d² / σ²) when that weight is at least ``theta``, else 0.
    Edges are directed (from -> to). The diagonal is always 1. ``sigma``
    defaults to the standard deviation of all listed distances, repeats included.

    Raises:
        DataValidationError: ids out of range, negative distances, conflicting
            duplicates, or a non-positive kernel width.
    """
    if n < 1:
        raise DataValidationError(f"node count must be positive, got {n}")
    edges = list(edges)
    graph = _distance_graph(edges, n)
    # duplicates count once in the graph but every listed distance feeds the kernel width
    distances = np.array([float(d) for _, _, d in edges], dtype=np.float64)

    if sigma is None:
        sigma = float(np.std(distances)) if distances.size else 0.0
        if sigma <= 0 and distances.size:
            # identical distances: one sensor spacing becomes the kernel width
            sigma = float(distances[0]) or 1.0
            logger.warning("All %d listed distances are identical; using sigma=%.4f", distances.size, sigma)
    if distances.size and sigma <= 0:
        raise DataValidationError(f"sigma must be positive, got {sigma}")

    for _, _, data in graph.edges(data=True):
        weight = float(np.exp(-(data["distance"] ** 2) / sigma**2))
        data["weight"] = weight if weight >= theta else 0.0

    adjacency = nx.to_numpy_array(graph, nodelist=list(range(n)), weight="weight", dtype=np.float64)
    np.fill_diagonal(adjacency, 1.0)
    logger.debug(
        "Built adjacency for %d nodes: %d listed edges, %d kept (sigma=%.4f, theta=%.3f)",
        n,
        distances.size,
        int(np.count_nonzero(adjacency) - n),
        sigma,
        theta,
    )
    return adjacency


def row_normalize(matrix: np.ndarray) -> np.ndarray:
    """Divide each row by its sum; all-zero rows stay zero."""
    matrix = np.asarray(matrix, dtype=np.float64)
    sums = matrix.sum(axis=1, keepdims=True)
    return np.divide(matrix, sums, out=np.zeros_like(matrix), where=sums != 0)


def transition_matrices(adjacency: np.ndarray) -> GraphPair:
    """Forward (A / rowsum A) and backward (Aᵀ / rowsum Aᵀ) transition matrices."""
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise DataValidationError(f"adjacency must be square, got {adjacency.shape}")
    if (adjacency < 0).any():
        raise DataValidationError("adjacency has negative entries")
    return GraphPair(a_fwd=row_normalize(adjacency), a_bwd=row_normalize(adjacency.T))
