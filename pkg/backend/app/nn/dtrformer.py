"""
DTRformer: embedding -> DST2former -> multi-view graph fusion -> linear head.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Union

import numpy as np

from app.core.exceptions import ShapeMismatchError
from app.core.logging import get_logger
from app.models.config import TrainConfig
from app.models.traffic import GraphPair, NormStats, SampleBatch
from app.nn.attention import DST2Former
from app.nn.embedding import EmbeddingLayer
from app.nn.graph_fusion import MultiViewGraphFusion
from app.nn.head import PredictionHead
from app.nn.module import Module
from app.tensor import ops
from app.tensor.checkpoint import load_checkpoint, restore_parameters, save_checkpoint
from app.tensor.tensor import Tensor

logger = get_logger(__name__)


class DTRformer(Module):
    """
    Spatio-temporal forecaster.

    Ablation switches from the config decide which blocks exist:
        no_adaptive     no adaptive node matrix, no DST2former; fusion sees graphs only
        no_transformer  no DST2former; the adaptive slice stands in for the trend
        no_*_graph      the corresponding graph view is left out of the fusion input
        no_augmented_residual  AR-MSA uses LN(Z + MHSA(Z))
    """

    def __init__(self, config: TrainConfig, n_nodes: int, c_in: int, n_d: int):
        self.config = config
        self.n_nodes = n_nodes
        self.c_in = c_in
        self.n_d = n_d
        rng = np.random.default_rng(config.seed)
        dropout_rng = np.random.default_rng([config.seed, 0xD7])
        options = {"dropout": config.dropout, "dropout_rng": dropout_rng}
        d_e, d_a = config.d_e, config.d_a

        self.embedding = EmbeddingLayer(
            n_nodes, c_in, config.d_f, d_a, n_d, rng, use_adaptive=not config.no_adaptive
        )
        self.dst2former: Optional[DST2Former] = None
        if not (config.no_adaptive or config.no_transformer):
            self.dst2former = DST2Former(d_e, d_a, config.heads, config.layers, config.ffn_mult, rng, **options)
        self.graph_fusion = MultiViewGraphFusion(
            n_nodes,
            d_e,
            d_a,
            config.d_n,
            config.heads,
            config.ffn_mult,
            config.fusion_layers,
            config.armsa_layers,
            rng,
            use_forward_graph=config.use_forward_graph,
            use_backward_graph=config.use_backward_graph,
            use_trend=not config.no_adaptive,
            augmented=not config.no_augmented_residual,
            **options,
        )
        self.head = PredictionHead(config.t_in, d_e + d_a, config.t_out, config.c_out, rng)
        logger.debug("Built DTRformer with %d parameters", self.num_parameters())

    def encode(self, batch: SampleBatch) -> tuple[Tensor, Optional[Tensor]]:
        """Embedding plus trend extraction: (E_exp, X_trd)."""
        d_e, d_a = self.config.d_e, self.config.d_a
        if batch.x.shape[1:] != (self.config.t_in, self.n_nodes, self.c_in):
            raise ShapeMismatchError(
                f"batch inputs {batch.x.shape} do not match model (T={self.config.t_in}, N={self.n_nodes}, C={self.c_in})"
            )
        x = self.embedding.embed(batch)
        if self.dst2former is not None:
            h_st = self.dst2former(x)
            return ops.slice_axis(h_st, 0, d_e), ops.slice_axis(h_st, d_e, d_e + d_a)
        if self.config.no_adaptive:
            return x, None
        return ops.slice_axis(x, 0, d_e), ops.slice_axis(x, d_e, d_e + d_a)

    def forward(self, batch: SampleBatch, graph: GraphPair) -> Tensor:
        """Normalized predictions (B, T', N, C_out)."""
        e_exp, x_trd = self.encode(batch)
        dtype = e_exp.dtype
        z = self.graph_fusion(
            e_exp,
            x_trd,
            Tensor(graph.a_fwd, dtype=dtype),
            Tensor(graph.a_bwd, dtype=dtype),
        )
        return self.head(z)

    def predict(self, batch: SampleBatch, graph: GraphPair, stats: NormStats) -> Tensor:
        """Predictions in original units."""
        y = self.forward(batch, graph)
        c = self.config.c_out
        std = Tensor(stats.std[:c], dtype=y.dtype)
        mean = Tensor(stats.mean[:c], dtype=y.dtype)
        return ops.add(ops.multiply(y, std), mean)

    def loss(self, batch: SampleBatch, graph: GraphPair, stats: NormStats) -> Tensor:
        """Mean absolute error in original units."""
        return ops.mae(self.predict(batch, graph, stats), batch.y)

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(path, self.named_parameters())

    def load(self, path: Union[str, Path]) -> None:
        restore_parameters(self.named_parameters(), load_checkpoint(path))


def build_model(config: TrainConfig, n_nodes: int, c_in: int, n_d: int) -> DTRformer:
    return DTRformer(config, n_nodes=n_nodes, c_in=c_in, n_d=config.n_d or n_d)
