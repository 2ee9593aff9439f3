"""
Attention blocks: multi-head attention, post-norm encoder layers, the spatial
and temporal encoders and the cross spatio-temporal attention that fuses them.

All blocks operate on (B, T, N, D) tensors. Attention over nodes treats the
time axis as batch; attention over time permutes to (B, N, T, D) first.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from app.core.exceptions import ConfigurationError, ShapeMismatchError
from app.nn.module import FeedForward, LayerNorm, Linear, Module
from app.tensor import ops
from app.tensor.tensor import Tensor

_TIME_MAJOR = (0, 2, 1, 3)


class MultiHeadAttention(Module):
    """
    Scaled dot-product attention with ``heads`` heads over the token axis -2.

    Query, key and value projections are D x D without bias; the output
    projection maps D to ``out_width`` (default D). The most recent weights
    are kept in ``last_weights`` shaped (B, A, h, S_q, S_k).
    """

    def __init__(
        self,
        width: int,
        heads: int,
        rng: np.random.Generator,
        out_width: Optional[int] = None,
        dropout: float = 0.0,
        dropout_rng: Optional[np.random.Generator] = None,
    ):
        if width % heads != 0:
            raise ConfigurationError(f"attention width {width} is not divisible by {heads} heads")
        self.width = width
        self.heads = heads
        self.head_dim = width // heads
        self.w_q = Linear(width, width, rng, bias=False)
        self.w_k = Linear(width, width, rng, bias=False)
        self.w_v = Linear(width, width, rng, bias=False)
        self.w_o = Linear(width, out_width or width, rng, bias=False)
        self.dropout = dropout
        self.dropout_rng = dropout_rng
        self.last_weights: Optional[np.ndarray] = None

    def _split_heads(self, x: Tensor) -> Tensor:
        b, a, s, _ = x.shape
        return ops.permute(ops.reshape(x, (b, a, s, self.heads, self.head_dim)), (0, 1, 3, 2, 4))

    def forward(self, query_src: Tensor, key_src: Optional[Tensor] = None) -> Tensor:
        key_src = query_src if key_src is None else key_src
        if query_src.ndim != 4 or key_src.ndim != 4:
            raise ShapeMismatchError(f"attention expects 4-d inputs, got {query_src.shape} and {key_src.shape}")
        if query_src.shape[-1] != self.width or key_src.shape[-1] != self.width:
            raise ShapeMismatchError(
                f"attention width {self.width} does not match inputs {query_src.shape} / {key_src.shape}"
            )
        b, a, s_q, _ = query_src.shape
        q = self._split_heads(self.w_q(query_src))
        k = self._split_heads(self.w_k(key_src))
        v = self._split_heads(self.w_v(key_src))

        scores = ops.scale(ops.matmul(q, ops.transpose(k)), 1.0 / math.sqrt(self.head_dim))
        weights = ops.softmax(scores, axis=-1)
        self.last_weights = weights.data
        mixed = ops.matmul(weights, v)
        merged = ops.reshape(ops.permute(mixed, (0, 1, 3, 2, 4)), (b, a, s_q, self.width))
        out = self.w_o(merged)
        if self.training and self.dropout > 0 and self.dropout_rng is not None:
            out = ops.dropout(out, self.dropout, self.dropout_rng)
        return out


class EncoderLayer(Module):
    """Self-attention then feed-forward, each wrapped in residual + layer norm."""

    def __init__(
        self,
        width: int,
        heads: int,
        ffn_mult: int,
        rng: np.random.Generator,
        dropout: float = 0.0,
        dropout_rng: Optional[np.random.Generator] = None,
    ):
        self.attention = MultiHeadAttention(width, heads, rng, dropout=dropout, dropout_rng=dropout_rng)
        self.norm1 = LayerNorm(width)
        self.ffn = FeedForward(width, ffn_mult, rng, dropout=dropout, dropout_rng=dropout_rng)
        self.norm2 = LayerNorm(width)

    def forward(self, x: Tensor) -> Tensor:
        h = self.norm1(ops.add(x, self.attention(x)))
        return self.norm2(ops.add(h, self.ffn(h)))


class SpatialEncoder(Module):
    """Stack of encoder layers attending across nodes at every time step."""

    def __init__(self, width: int, heads: int, layers: int, ffn_mult: int, rng: np.random.Generator, **kwargs):
        self.layers = [EncoderLayer(width, heads, ffn_mult, rng, **kwargs) for _ in range(layers)]

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class TemporalEncoder(Module):
    """Stack of encoder layers attending across time steps for every node."""

    def __init__(self, width: int, heads: int, layers: int, ffn_mult: int, rng: np.random.Generator, **kwargs):
        self.layers = [EncoderLayer(width, heads, ffn_mult, rng, **kwargs) for _ in range(layers)]

    def forward(self, x: Tensor) -> Tensor:
        h = ops.permute(x, _TIME_MAJOR)
        for layer in self.layers:
            h = layer(h)
        return ops.permute(h, _TIME_MAJOR)


class CrossSpatioTemporalAttention(Module):
    """
    Per node, spatial-encoder queries attend over the temporal-encoder keys and
    values across all time steps. The d_a-wide trend is concatenated after the
    d_e-wide feature slice of the embedding, added to H_t, normalized, then
    passed through a residual feed-forward block.
    """

    def __init__(
        self,
        d_e: int,
        d_a: int,
        heads: int,
        ffn_mult: int,
        rng: np.random.Generator,
        dropout: float = 0.0,
        dropout_rng: Optional[np.random.Generator] = None,
    ):
        width = d_e + d_a
        self.d_e = d_e
        self.d_a = d_a
        self.attention = MultiHeadAttention(
            width, heads, rng, out_width=d_a, dropout=dropout, dropout_rng=dropout_rng
        )
        self.norm1 = LayerNorm(width)
        self.ffn = FeedForward(width, ffn_mult, rng, dropout=dropout, dropout_rng=dropout_rng)
        self.norm2 = LayerNorm(width)

    def trend(self, h_s: Tensor, h_t: Tensor) -> Tensor:
        """X_trd shaped (B, T, N, d_a)."""
        if h_s.shape != h_t.shape:
            raise ShapeMismatchError(f"cross attention inputs differ: {h_s.shape} vs {h_t.shape}")
        mixed = self.attention(ops.permute(h_s, _TIME_MAJOR), ops.permute(h_t, _TIME_MAJOR))
        return ops.permute(mixed, _TIME_MAJOR)

    def forward(self, h_s: Tensor, h_t: Tensor, e_exp: Tensor) -> Tensor:
        if e_exp.shape[:-1] != h_t.shape[:-1] or e_exp.shape[-1] != self.d_e:
            raise ShapeMismatchError(f"feature slice {e_exp.shape} does not fit {h_t.shape} with d_e={self.d_e}")
        x_trd = self.trend(h_s, h_t)
        h = self.norm1(ops.add(ops.concatenate([e_exp, x_trd], axis=-1), h_t))
        return self.norm2(ops.add(h, self.ffn(h)))


class DST2Former(Module):
    """Parallel spatial and temporal encoders over a shared input, fused by cross attention."""

    def __init__(
        self,
        d_e: int,
        d_a: int,
        heads: int,
        layers: int,
        ffn_mult: int,
        rng: np.random.Generator,
        dropout: float = 0.0,
        dropout_rng: Optional[np.random.Generator] = None,
    ):
        width = d_e + d_a
        self.d_e = d_e
        options = {"dropout": dropout, "dropout_rng": dropout_rng}
        self.spatial = SpatialEncoder(width, heads, layers, ffn_mult, rng, **options)
        self.temporal = TemporalEncoder(width, heads, layers, ffn_mult, rng, **options)
        self.cross = CrossSpatioTemporalAttention(d_e, d_a, heads, ffn_mult, rng, **options)

    def forward(self, x: Tensor) -> Tensor:
        """(B, T, N, D) embedding -> H_st (B, T, N, D)."""
        e_exp = ops.slice_axis(x, 0, self.d_e, axis=-1)
        return self.cross(self.spatial(x), self.temporal(x), e_exp)
