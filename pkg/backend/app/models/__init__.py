# Models package
from app.models.config import TrainConfig, build_config, dump_config, load_config, parse_config_text
from app.models.traffic import (
    GraphPair,
    NormStats,
    PreparedDataset,
    SampleBatch,
    TrafficSeries,
    WindowSplits,
)

__all__ = [
    "TrainConfig",
    "build_config",
    "dump_config",
    "load_config",
    "parse_config_text",
    "GraphPair",
    "NormStats",
    "PreparedDataset",
    "SampleBatch",
    "TrafficSeries",
    "WindowSplits",
]
