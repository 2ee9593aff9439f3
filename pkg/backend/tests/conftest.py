"""
Pytest Configuration and Shared Fixtures

This module provides shared fixtures for testing including:
- Tiny model configurations
- Seeded synthetic datasets
- A handcrafted 5-node distance list
- A 64-bit precision context
"""

import os

import numpy as np
import pytest

# Set test environment before importing app
os.environ["DEBUG"] = "True"
os.environ.setdefault("DTR_THREADS", "2")

from app.data.prepare import prepare_dataset  # noqa: E402
from app.data.synthetic import synth_generate  # noqa: E402
from app.models.config import TrainConfig, build_config  # noqa: E402
from app.models.traffic import PreparedDataset, SampleBatch, TrafficSeries  # noqa: E402
from app.tensor.tensor import precision  # noqa: E402

TINY_MODEL = {
    "d_f": 4,
    "d_a": 8,
    "d_n": 8,
    "heads": 2,
    "layers": 1,
    "ffn_mult": 2,
    "fusion_layers": 1,
    "armsa_layers": 1,
    "batch_size": 8,
    "max_epochs": 2,
    "patience": 3,
    "seed": 0,
}


@pytest.fixture
def tiny_config() -> TrainConfig:
    """
    Small widths (d_e=16, d_a=8, D=24) so a full forward/backward takes milliseconds.

    Usage:
        def test_something(tiny_config):
            model = build_model(tiny_config, n_nodes=4, c_in=1, n_d=24)
    """
    return build_config(TINY_MODEL)


@pytest.fixture
def hourly_series() -> TrafficSeries:
    """Six days of hourly synthetic flow on 4 nodes (144 steps)."""
    return synth_generate(n_nodes=4, n_days=6, seed=3, step_seconds=3600).series


@pytest.fixture
def hourly_synthetic():
    return synth_generate(n_nodes=4, n_days=6, seed=3, step_seconds=3600)


@pytest.fixture
def prepared_dataset(hourly_synthetic, tiny_config) -> PreparedDataset:
    """144 steps at 6:2:2 -> 86/29/29 raw steps -> 63/6/6 windows."""
    return prepare_dataset(hourly_synthetic.series, hourly_synthetic.edges, tiny_config)


@pytest.fixture
def five_node_edges() -> list[tuple[int, int, float]]:
    """Directed distances (km) for a small corridor with one spur and one isolated sensor."""
    return [
        (0, 1, 1.0),
        (1, 0, 1.0),
        (1, 2, 2.0),
        (2, 1, 2.0),
        (2, 3, 3.0),
        (0, 3, 6.0),
    ]


@pytest.fixture
def random_batch() -> SampleBatch:
    """A (2, 12, 4, 1) batch of normalized-scale inputs with hourly calendar indices."""
    rng = np.random.default_rng(11)
    return SampleBatch(
        x=rng.standard_normal((2, 12, 4, 1)).astype(np.float32),
        y=rng.uniform(50.0, 150.0, size=(2, 12, 4, 1)).astype(np.float32),
        tod=rng.integers(0, 24, size=(2, 12)),
        dow=rng.integers(0, 7, size=(2, 12)),
        starts=np.arange(2),
    )


@pytest.fixture
def float64():
    """Run the test body with 64-bit tensors as the default dtype."""
    with precision("float64"):
        yield
