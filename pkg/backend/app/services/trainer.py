"""
Training loop with Adam, gradient clipping and early stopping on validation MAE.

Artifacts written to the output directory:
    best.dtrp       parameters of the best validation epoch
    config.txt      effective configuration
    train_log.csv   epoch, train_mae, val_mae, seconds
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import pandas as pd
import structlog

from app.core.exceptions import (
    DataValidationError,
    NonFiniteError,
    NonFiniteGradientError,
    TrainingDivergedError,
)
from app.core.logging import get_logger
from app.data.windows import BatchLoader
from app.models.config import TrainConfig, dump_config
from app.models.traffic import PreparedDataset
from app.nn.dtrformer import DTRformer, build_model
from app.services.evaluation import validation_mae
from app.services.optimizer import TrainState, adam_step, clip_grad_norm
from app.tensor.tensor import Tape

logger = get_logger(__name__)
events = structlog.get_logger("app.services.trainer")

CHECKPOINT_NAME = "best.dtrp"
LOG_NAME = "train_log.csv"
CONFIG_NAME = "config.txt"


@dataclass
class EpochRecord:
    epoch: int
    train_mae: float
    val_mae: float
    seconds: float


@dataclass
class TrainingResult:
    best_epoch: int
    best_val_mae: float
    epochs_run: int
    stopped_early: bool
    checkpoint: Path
    history: list[EpochRecord] = field(default_factory=list)


class Trainer:
    """
    Owns one model, its optimizer state and the output directory of a run.

    Usage:
        trainer = Trainer(config, dataset, out_dir)
        result = trainer.train()
    """

    def __init__(
        self,
        config: TrainConfig,
        dataset: PreparedDataset,
        out_dir: Union[str, Path],
        model: Optional[DTRformer] = None,
    ):
        for split in ("train", "val"):
            if dataset.splits[split].size == 0:
                raise DataValidationError(f"{split} split has no windows; training needs train and val data")
        self.config = config
        self.dataset = dataset
        self.out_dir = Path(out_dir)
        self.model = model or build_model(config, dataset.n_nodes, dataset.n_channels, dataset.steps_per_day)
        self.params = self.model.named_parameters()
        self.state = TrainState()
        self.history: list[EpochRecord] = []
        self.loader = BatchLoader(
            dataset, "train", config.batch_size, shuffle=True, seed=config.seed, c_out=config.c_out
        )

    @property
    def checkpoint_path(self) -> Path:
        return self.out_dir / CHECKPOINT_NAME

    def validate(self) -> float:
        return validation_mae(self.model, self.dataset, self.config.eval_batch_size)

    def train_epoch(self, epoch: int) -> float:
        """One pass over shuffled training batches; returns the window-weighted mean training MAE."""
        total, seen = 0.0, 0
        self.model.train()
        try:
            for batch in self.loader.epoch(epoch):
                try:
                    with Tape() as tape:
                        loss = self.model.loss(batch, self.dataset.graph, self.dataset.stats)
                    value = loss.item()
                except NonFiniteError:
                    value = float("nan")
                if not math.isfinite(value):
                    self._diverged(epoch, value)
                grads = tape.gradient(loss, self.params)
                grads, _ = clip_grad_norm(grads, self.config.clip_norm)
                adam_step(self.params, grads, self.state, self.config.lr)
                total += value * batch.size
                seen += batch.size
        except NonFiniteGradientError as exc:
            events.warning("nonfinite_gradient", epoch=epoch, source=exc.source, error=str(exc))
            logger.warning("Skipping the rest of epoch %d: %s", epoch, exc)
        return total / seen if seen else float("nan")

    def _diverged(self, epoch: int, value: float) -> None:
        checkpoint = self.checkpoint_path if self.checkpoint_path.exists() else None
        if checkpoint is not None:
            self.model.load(checkpoint)
        events.error("training_diverged", epoch=epoch, loss=value, checkpoint=str(checkpoint))
        raise TrainingDivergedError(f"training loss became {value} in epoch {epoch}", checkpoint=checkpoint)

    def _write_log(self) -> None:
        frame = pd.DataFrame(
            [(r.epoch, r.train_mae, r.val_mae, r.seconds) for r in self.history],
            columns=["epoch", "train_mae", "val_mae", "seconds"],
        )
        frame.to_csv(self.out_dir / LOG_NAME, index=False)

    def train(self) -> TrainingResult:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / CONFIG_NAME).write_text(dump_config(self.config), encoding="utf-8")
        events.info(
            "training_started",
            parameters=self.model.num_parameters(),
            train_windows=int(self.dataset.splits.train.size),
            val_windows=int(self.dataset.splits.val.size),
        )

        stopped_early = False
        for epoch in range(1, self.config.max_epochs + 1):
            self.state.epoch = epoch
            started = time.perf_counter()
            train_mae = self.train_epoch(epoch)
            val_mae = self.validate()
            if not math.isfinite(val_mae):
                self._diverged(epoch, val_mae)
            record = EpochRecord(epoch, train_mae, val_mae, time.perf_counter() - started)
            self.history.append(record)

            if self.state.record_validation(val_mae):
                self.model.save(self.checkpoint_path)
                events.info("checkpoint_saved", epoch=epoch, val_mae=val_mae)
            self._write_log()
            events.info(
                "epoch_completed",
                epoch=epoch,
                train_mae=round(train_mae, 6),
                val_mae=round(val_mae, 6),
                seconds=round(record.seconds, 3),
            )
            if self.state.should_stop(self.config.patience):
                stopped_early = True
                events.info("early_stop", epoch=epoch, best_epoch=self.state.best_epoch)
                break

        self.model.load(self.checkpoint_path)
        return TrainingResult(
            best_epoch=self.state.best_epoch,
            best_val_mae=self.state.best_val_mae,
            epochs_run=len(self.history),
            stopped_early=stopped_early,
            checkpoint=self.checkpoint_path,
            history=list(self.history),
        )


def train(config: TrainConfig, dataset: PreparedDataset, out_dir: Union[str, Path]) -> tuple[DTRformer, TrainingResult]:
    """Train a fresh model; returns it restored to its best validation epoch."""
    trainer = Trainer(config, dataset, out_dir)
    result = trainer.train()
    return trainer.model, result
