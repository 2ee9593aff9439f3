"""
Multi-view graph fusion.

Static bidirectional graph features are projected, fused with the dynamic
trend by a residual MLP, and the result is refined by multi-head attention
with an augmented (GeLU) residual.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from app.core.exceptions import ConfigurationError, ShapeMismatchError
from app.nn.attention import MultiHeadAttention
from app.nn.module import FeedForward, LayerNorm, Linear, Module
from app.tensor import ops
from app.tensor.tensor import Tensor


class GraphProjection(Module):
    """G = relu(A W + b) for the forward and backward transition matrices."""

    def __init__(self, n_nodes: int, d_n: int, rng: np.random.Generator, forward: bool = True, backward: bool = True):
        self.fwd = Linear(n_nodes, d_n, rng) if forward else None
        self.bwd = Linear(n_nodes, d_n, rng) if backward else None

    def forward(self, a_fwd: Tensor, a_bwd: Tensor) -> tuple[Optional[Tensor], Optional[Tensor]]:
        g_f = ops.relu(self.fwd(a_fwd)) if self.fwd is not None else None
        g_b = ops.relu(self.bwd(a_bwd)) if self.bwd is not None else None
        return g_f, g_b


class ResidualBlock(Module):
    """h + FC2(relu(FC1(h))) at constant width."""

    def __init__(self, width: int, rng: np.random.Generator):
        self.fc1 = Linear(width, width, rng)
        self.fc2 = Linear(width, width, rng)

    def forward(self, h: Tensor) -> Tensor:
        return ops.add(h, self.fc2(ops.relu(self.fc1(h))))


class DynamicStaticFusion(Module):
    """Residual MLP over concat(G_f, G_b, X_trd) followed by a reduction to d_a."""

    def __init__(self, width: int, d_a: int, layers: int, rng: np.random.Generator):
        if width <= 0:
            raise ConfigurationError("fusion module has no input: every graph and trend slice is disabled")
        self.width = width
        self.blocks = [ResidualBlock(width, rng) for _ in range(layers)]
        self.reduce = Linear(width, d_a, rng)

    def forward(self, parts: Sequence[Tensor], lead: tuple[int, int, int]) -> Tensor:
        """
        Args:
            parts: (N, w) graph features and/or (B, T, N, w) trend slices, in layout order.
            lead: (B, T, N) to broadcast graph features to.
        """
        expanded = [p if p.ndim == 4 else ops.broadcast_to(p, (*lead, p.shape[-1])) for p in parts]
        hidden = expanded[0] if len(expanded) == 1 else ops.concatenate(expanded, axis=-1)
        if hidden.shape[-1] != self.width:
            raise ShapeMismatchError(f"fusion input width {hidden.shape[-1]} != configured {self.width}")
        for block in self.blocks:
            hidden = block(hidden)
        return self.reduce(hidden)


class ARMSALayer(Module):
    """LN(Z + gelu(Z) + MHSA(Z)) over nodes, then a residual feed-forward with LN."""

    def __init__(
        self,
        width: int,
        heads: int,
        ffn_mult: int,
        rng: np.random.Generator,
        augmented: bool = True,
        dropout: float = 0.0,
        dropout_rng: Optional[np.random.Generator] = None,
    ):
        self.augmented = augmented
        self.attention = MultiHeadAttention(width, heads, rng, dropout=dropout, dropout_rng=dropout_rng)
        self.norm1 = LayerNorm(width)
        self.ffn = FeedForward(width, ffn_mult, rng, dropout=dropout, dropout_rng=dropout_rng)
        self.norm2 = LayerNorm(width)

    def augmented_attention(self, z: Tensor) -> Tensor:
        h = ops.add(z, self.attention(z))
        if self.augmented:
            h = ops.add(h, ops.gelu(z))
        return self.norm1(h)

    def forward(self, z: Tensor) -> Tensor:
        h = self.augmented_attention(z)
        return self.norm2(ops.add(h, self.ffn(h)))


class ARMSA(Module):
    def __init__(self, width: int, heads: int, layers: int, ffn_mult: int, rng: np.random.Generator, **kwargs):
        self.width = width
        self.layers = [ARMSALayer(width, heads, ffn_mult, rng, **kwargs) for _ in range(layers)]

    def forward(self, e_exp: Tensor, x_raw: Tensor) -> Tensor:
        z = ops.concatenate([e_exp, x_raw], axis=-1)
        if z.shape[-1] != self.width:
            raise ShapeMismatchError(f"AR-MSA input width {z.shape[-1]} != {self.width}")
        for layer in self.layers:
            z = layer(z)
        return z


class MultiViewGraphFusion(Module):
    """Graph projection + dynamic-static fusion + AR-MSA; ablation switches drop graph or trend views."""

    def __init__(
        self,
        n_nodes: int,
        d_e: int,
        d_a: int,
        d_n: int,
        heads: int,
        ffn_mult: int,
        fusion_layers: int,
        armsa_layers: int,
        rng: np.random.Generator,
        use_forward_graph: bool = True,
        use_backward_graph: bool = True,
        use_trend: bool = True,
        augmented: bool = True,
        dropout: float = 0.0,
        dropout_rng: Optional[np.random.Generator] = None,
    ):
        self.use_trend = use_trend
        self.projection = GraphProjection(n_nodes, d_n, rng, forward=use_forward_graph, backward=use_backward_graph)
        width = d_n * (int(use_forward_graph) + int(use_backward_graph)) + (d_a if use_trend else 0)
        self.fusion = DynamicStaticFusion(width, d_a, fusion_layers, rng)
        self.armsa = ARMSA(
            d_e + d_a, heads, armsa_layers, ffn_mult, rng,
            augmented=augmented, dropout=dropout, dropout_rng=dropout_rng,
        )

    def fuse(self, a_fwd: Tensor, a_bwd: Tensor, x_trd: Optional[Tensor], lead: tuple[int, int, int]) -> Tensor:
        """X_raw (B, T, N, d_a)."""
        g_f, g_b = self.projection(a_fwd, a_bwd)
        parts = [g for g in (g_f, g_b) if g is not None]
        if self.use_trend:
            if x_trd is None:
                raise ShapeMismatchError("trend input required when the trend view is enabled")
            parts.append(x_trd)
        return self.fusion(parts, lead)

    def forward(self, e_exp: Tensor, x_trd: Optional[Tensor], a_fwd: Tensor, a_bwd: Tensor) -> Tensor:
        b, t, n, _ = e_exp.shape
        x_raw = self.fuse(a_fwd, a_bwd, x_trd, (b, t, n))
        return self.armsa(e_exp, x_raw)
