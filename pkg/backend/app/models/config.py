"""
Experiment configuration.

A single flat pydantic model covers the training loop, model widths, data
preparation and ablation switches. Config files are plain ``key = value``
text; unknown keys are rejected.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.core.exceptions import ConfigurationError


class TrainConfig(BaseModel):
    """Hyperparameters and switches for one experiment."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    # optimisation
    lr: float = Field(0.001, gt=0, description="Adam learning rate")
    batch_size: int = Field(16, ge=1)
    max_epochs: int = Field(200, ge=1)
    patience: int = Field(10, ge=1, description="Epochs without validation improvement before stopping")
    seed: int = Field(0, ge=0, le=2**64 - 1)
    clip_norm: float = Field(5.0, gt=0, description="Global gradient norm cap")
    dropout: float = Field(0.0, ge=0.0, lt=1.0)

    # ablations
    no_adaptive: bool = False
    no_transformer: bool = False
    no_forward_graph: bool = False
    no_backward_graph: bool = False
    no_graphs: bool = False
    no_augmented_residual: bool = False

    # model widths
    d_f: int = Field(24, ge=1, description="Width of each feature/calendar embedding")
    d_a: int = Field(100, ge=1, description="Adaptive embedding and trend width")
    d_n: int = Field(100, ge=1, description="Graph projection width")
    layers: int = Field(3, ge=1, description="Spatial/temporal encoder depth")
    heads: int = Field(4, ge=1)
    ffn_mult: int = Field(4, ge=1)
    fusion_layers: int = Field(2, ge=0)
    armsa_layers: int = Field(1, ge=1)
    t_in: int = Field(12, ge=1)
    t_out: int = Field(12, ge=1)
    c_out: int = Field(1, ge=1)
    n_d: Optional[int] = Field(None, ge=1, description="Steps per day; derived from the step size when absent")

    # data preparation and evaluation
    theta: float = Field(0.1, ge=0.0, le=1.0, description="Adjacency kernel threshold")
    sigma: Optional[float] = Field(None, gt=0, description="Kernel width; std of distances when absent")
    train_ratio: float = Field(0.6, ge=0.0, le=1.0)
    val_ratio: float = Field(0.2, ge=0.0, le=1.0)
    test_ratio: float = Field(0.2, ge=0.0, le=1.0)
    mape_floor: float = Field(10.0, ge=0.0)
    eval_batch_size: int = Field(64, ge=1)

    @field_validator("n_d", "sigma", mode="before")
    @classmethod
    def parse_optional(cls, v: Any) -> Any:
        """Accept ``none`` / empty strings from config files."""
        if isinstance(v, str) and v.strip().lower() in ("", "none", "null"):
            return None
        return v

    @model_validator(mode="after")
    def check_consistency(self) -> "TrainConfig":
        total = self.train_ratio + self.val_ratio + self.test_ratio
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            raise ValueError(f"split ratios must sum to 1, got {total}")
        if self.d_model % self.heads != 0:
            raise ValueError(f"model width {self.d_model} (4*d_f + d_a) is not divisible by heads={self.heads}")
        if self.no_adaptive and not (self.use_forward_graph or self.use_backward_graph):
            raise ValueError("no_adaptive with both graphs disabled leaves the fusion module without input")
        return self

    @property
    def d_e(self) -> int:
        """Width of the feature and calendar part of the embedding."""
        return 4 * self.d_f

    @property
    def d_model(self) -> int:
        return self.d_e + self.d_a

    @property
    def use_forward_graph(self) -> bool:
        return not (self.no_forward_graph or self.no_graphs)

    @property
    def use_backward_graph(self) -> bool:
        return not (self.no_backward_graph or self.no_graphs)

    @property
    def ratios(self) -> tuple[float, float, float]:
        return (self.train_ratio, self.val_ratio, self.test_ratio)

    def with_overrides(self, **overrides: Any) -> "TrainConfig":
        """Return a validated copy with ``overrides`` applied (``None`` values are ignored)."""
        merged = {**self.model_dump(), **{k: v for k, v in overrides.items() if v is not None}}
        return build_config(merged)


def build_config(values: Mapping[str, Any]) -> TrainConfig:
    """Validate a mapping into a ``TrainConfig``, mapping failures to ``ConfigurationError``."""
    try:
        return TrainConfig.model_validate(dict(values))
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigurationError(f"invalid configuration: {problems}") from exc


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"line {lineno}: missing key")
        if key in values:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def load_config(path: Optional[Union[str, Path]] = None, **overrides: Any) -> TrainConfig:
    """Load a config file (defaults when ``path`` is None) and apply overrides."""
    values: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}")
        values.update(parse_config_text(path.read_text(encoding="utf-8")))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return build_config(values)


def dump_config(config: TrainConfig) -> str:
    """Serialize to the flat text format; unset optional keys are omitted."""
    lines = []
    for key, value in config.model_dump().items():
        if value is None:
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
