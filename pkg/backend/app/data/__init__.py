# Data pipeline: ingestion, graph construction, normalization, windowing
from app.data.adjacency import build_adjacency, row_normalize, transition_matrices
from app.data.normalization import split_lengths, zscore_fit_apply
from app.data.prepare import load_prepared, prepare_dataset, save_prepared
from app.data.synthetic import synth_generate, write_synthetic
from app.data.traffic_io import (
    PEMS_DATASETS,
    load_pems_npz,
    read_edges_csv,
    read_traffic,
    read_traffic_binary,
    read_traffic_csv,
    write_adjacency_csv,
    write_traffic_binary,
    write_traffic_csv,
)
from app.data.windows import BatchLoader, assemble_batch, calendar_indices, count_windows, make_windows

__all__ = [
    "build_adjacency",
    "row_normalize",
    "transition_matrices",
    "split_lengths",
    "zscore_fit_apply",
    "load_prepared",
    "prepare_dataset",
    "save_prepared",
    "synth_generate",
    "write_synthetic",
    "PEMS_DATASETS",
    "load_pems_npz",
    "read_edges_csv",
    "read_traffic",
    "read_traffic_binary",
    "read_traffic_csv",
    "write_adjacency_csv",
    "write_traffic_binary",
    "write_traffic_csv",
    "BatchLoader",
    "assemble_batch",
    "calendar_indices",
    "count_windows",
    "make_windows",
]
