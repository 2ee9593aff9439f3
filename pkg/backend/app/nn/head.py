"""Linear multi-step regression head."""

from __future__ import annotations

import numpy as np

from app.core.exceptions import ShapeMismatchError
from app.nn.module import Linear, Module
from app.tensor import ops
from app.tensor.tensor import Tensor


class PredictionHead(Module):
    """Per node: flatten (T, D) -> affine -> (T', C_out)."""

    def __init__(self, t_in: int, width: int, t_out: int, c_out: int, rng: np.random.Generator):
        self.t_in = t_in
        self.width = width
        self.t_out = t_out
        self.c_out = c_out
        self.proj = Linear(t_in * width, t_out * c_out, rng)

    def forward(self, z: Tensor) -> Tensor:
        """(B, T, N, D) -> (B, T', N, C_out), normalized units."""
        b, t, n, d = z.shape
        if (t, d) != (self.t_in, self.width):
            raise ShapeMismatchError(f"head expects (T={self.t_in}, D={self.width}), got {z.shape}")
        flat = ops.reshape(ops.permute(z, (0, 2, 1, 3)), (b, n, t * d))
        out = ops.reshape(self.proj(flat), (b, n, self.t_out, self.c_out))
        return ops.permute(out, (0, 2, 1, 3))
