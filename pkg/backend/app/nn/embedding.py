"""
Input embedding: feature projections, calendar tables and the adaptive node matrix.

Feature layout along the last axis of the output is fixed:
    [ E_time (d_f) | E_space (d_f) | day-of-week (d_f) | time-of-day (d_f) | adaptive (d_a) ]
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from app.models.traffic import SampleBatch
from app.nn.module import Linear, Module, parameter, uniform_init
from app.tensor import ops
from app.tensor.tensor import Tensor

DAYS_PER_WEEK = 7
ADAPTIVE_INIT_SCALE = 0.01


class EmbeddingLayer(Module):
    def __init__(
        self,
        n_nodes: int,
        c_in: int,
        d_f: int,
        d_a: int,
        n_d: int,
        rng: np.random.Generator,
        use_adaptive: bool = True,
    ):
        self.n_nodes = n_nodes
        self.d_f = d_f
        self.d_a = d_a if use_adaptive else 0
        self.w_time = Linear(c_in, d_f, rng)
        self.w_space = Linear(c_in, d_f, rng)
        self.dict_w = parameter(uniform_init(rng, (DAYS_PER_WEEK, d_f), d_f))
        self.dict_d = parameter(uniform_init(rng, (n_d, d_f), d_f))
        self.e_adaptive: Optional[Tensor] = (
            parameter(ADAPTIVE_INIT_SCALE * rng.standard_normal((n_nodes, d_a))) if use_adaptive else None
        )

    @property
    def d_e(self) -> int:
        return 4 * self.d_f

    @property
    def width(self) -> int:
        return self.d_e + self.d_a

    def slices(self) -> dict[str, tuple[int, int]]:
        """Feature ranges of each embedding inside the output."""
        d = self.d_f
        layout = {
            "time": (0, d),
            "space": (d, 2 * d),
            "day_of_week": (2 * d, 3 * d),
            "time_of_day": (3 * d, 4 * d),
        }
        if self.e_adaptive is not None:
            layout["adaptive"] = (4 * d, 4 * d + self.d_a)
        return layout

    def forward(self, x: Tensor, tod: np.ndarray, dow: np.ndarray) -> Tensor:
        """(B, T, N, C) inputs and (B, T) calendar indices -> (B, T, N, d_e [+ d_a])."""
        b, t, n, _ = x.shape
        parts = [self.w_time(x), self.w_space(x)]
        for table, index in ((self.dict_w, dow), (self.dict_d, tod)):
            looked_up = ops.embedding(table, np.asarray(index, dtype=np.int64))
            parts.append(ops.broadcast_to(ops.reshape(looked_up, (b, t, 1, self.d_f)), (b, t, n, self.d_f)))
        if self.e_adaptive is not None:
            parts.append(ops.broadcast_to(self.e_adaptive, (b, t, n, self.d_a)))
        return ops.concatenate(parts, axis=-1)

    def embed(self, batch: SampleBatch) -> Tensor:
        return self.forward(Tensor(batch.x), batch.tod, batch.dow)
