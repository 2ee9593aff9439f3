"""
Unit Tests for the Training Loop

Tests the Trainer on the 4-node hourly synthetic fixture:
- Early stopping and best-checkpoint restoration
- Run artifacts (best.dtrp, config.txt, train_log.csv)
- Bit-identical reruns
- Divergence handling
- Every ablation variant
"""

import numpy as np
import pandas as pd
import pytest

from app.core.exceptions import DataValidationError, TrainingDivergedError
from app.data.prepare import prepare_dataset
from app.models.config import load_config
from app.nn.dtrformer import build_model
from app.services.evaluation import validation_mae
from app.services.trainer import CHECKPOINT_NAME, CONFIG_NAME, LOG_NAME, Trainer
from app.tensor.tensor import Tensor


def _validation_sequence(mocker, trainer: Trainer, values: list[float]) -> list[dict]:
    """Replace validation with a fixed score sequence, snapshotting parameters at each call."""
    snapshots: list[dict] = []
    scores = iter(values)

    def fake_validate() -> float:
        snapshots.append(trainer.model.state_dict())
        return next(scores)

    mocker.patch.object(trainer, "validate", side_effect=fake_validate)
    return snapshots


class TestEarlyStopping:
    """Stopping rule and best-epoch selection."""

    @pytest.mark.unit
    def test_constant_validation_stops_after_patience_plus_one(self, mocker, tmp_path, tiny_config, prepared_dataset) -> None:
        config = tiny_config.with_overrides(max_epochs=20, patience=3)
        trainer = Trainer(config, prepared_dataset, tmp_path)
        mocker.patch.object(trainer, "train_epoch", return_value=1.0)
        mocker.patch.object(trainer, "validate", return_value=10.0)
        result = trainer.train()
        assert result.epochs_run == 4
        assert result.stopped_early
        assert result.best_epoch == 1

    @pytest.mark.unit
    def test_improving_validation_runs_to_max_epochs(self, mocker, tmp_path, tiny_config, prepared_dataset) -> None:
        config = tiny_config.with_overrides(max_epochs=5, patience=1)
        trainer = Trainer(config, prepared_dataset, tmp_path)
        mocker.patch.object(trainer, "train_epoch", return_value=1.0)
        mocker.patch.object(trainer, "validate", side_effect=[10.0, 9.0, 8.0, 7.0, 6.0])
        result = trainer.train()
        assert result.epochs_run == 5
        assert not result.stopped_early
        assert result.best_val_mae == 6.0

    @pytest.mark.unit
    def test_best_epoch_parameters_restored(self, mocker, tmp_path, tiny_config, prepared_dataset) -> None:
        config = tiny_config.with_overrides(max_epochs=10, patience=2)
        trainer = Trainer(config, prepared_dataset, tmp_path)
        snapshots = _validation_sequence(mocker, trainer, [5.0, 3.0, 4.0, 6.0])
        result = trainer.train()
        assert result.best_epoch == 2
        assert result.epochs_run == 4
        final = trainer.model.state_dict()
        for name, values in snapshots[1].items():
            assert np.array_equal(final[name], values)
        assert not all(np.array_equal(final[n], v) for n, v in snapshots[3].items())

    @pytest.mark.unit
    def test_best_score_never_increases(self, mocker, tmp_path, tiny_config, prepared_dataset) -> None:
        config = tiny_config.with_overrides(max_epochs=6, patience=6)
        trainer = Trainer(config, prepared_dataset, tmp_path)
        mocker.patch.object(trainer, "train_epoch", return_value=1.0)
        mocker.patch.object(trainer, "validate", side_effect=[4.0, 5.0, 2.0, 3.0, 2.5, 1.0])
        result = trainer.train()
        running_best = np.minimum.accumulate([r.val_mae for r in result.history])
        assert running_best.tolist() == [4.0, 4.0, 2.0, 2.0, 2.0, 1.0]
        assert result.best_epoch == 6


class TestArtifacts:
    """Files written by a run."""

    @pytest.mark.unit
    def test_run_directory(self, tmp_path, tiny_config, prepared_dataset) -> None:
        trainer = Trainer(tiny_config, prepared_dataset, tmp_path / "run")
        result = trainer.train()
        run = tmp_path / "run"
        assert (run / CHECKPOINT_NAME).exists()
        assert load_config(run / CONFIG_NAME) == tiny_config
        log = pd.read_csv(run / LOG_NAME)
        assert list(log.columns) == ["epoch", "train_mae", "val_mae", "seconds"]
        assert log["epoch"].tolist() == [1, 2]
        assert result.best_val_mae == pytest.approx(log["val_mae"].min())
        assert np.isfinite(log["train_mae"]).all()

    @pytest.mark.unit
    def test_checkpoint_reproduces_validation(self, tmp_path, tiny_config, prepared_dataset) -> None:
        trainer = Trainer(tiny_config, prepared_dataset, tmp_path)
        result = trainer.train()
        fresh = build_model(
            tiny_config.with_overrides(seed=99),
            prepared_dataset.n_nodes,
            prepared_dataset.n_channels,
            prepared_dataset.steps_per_day,
        )
        fresh.load(result.checkpoint)
        assert validation_mae(fresh, prepared_dataset) == pytest.approx(result.best_val_mae, abs=1e-6)

    @pytest.mark.unit
    def test_training_reduces_error(self, tmp_path, tiny_config, prepared_dataset) -> None:
        config = tiny_config.with_overrides(max_epochs=4, lr=0.01)
        result = Trainer(config, prepared_dataset, tmp_path).train()
        assert result.history[-1].train_mae < result.history[0].train_mae

    @pytest.mark.unit
    def test_empty_validation_split(self, tmp_path, tiny_config, hourly_synthetic) -> None:
        config = tiny_config.with_overrides(train_ratio=0.8, val_ratio=0.0, test_ratio=0.2)
        dataset = prepare_dataset(hourly_synthetic.series, hourly_synthetic.edges, config)
        with pytest.raises(DataValidationError, match="val split has no windows"):
            Trainer(config, dataset, tmp_path)


class TestDeterminism:
    """Identical seeds give identical runs."""

    @pytest.mark.unit
    def test_bit_identical_reruns(self, tmp_path, tiny_config, prepared_dataset) -> None:
        config = tiny_config.with_overrides(max_epochs=1)
        first = Trainer(config, prepared_dataset, tmp_path / "a").train()
        second = Trainer(config, prepared_dataset, tmp_path / "b").train()
        assert first.history[0].train_mae == second.history[0].train_mae
        assert first.checkpoint.read_bytes() == second.checkpoint.read_bytes()

    @pytest.mark.unit
    def test_seed_changes_run(self, tmp_path, tiny_config, prepared_dataset) -> None:
        first = Trainer(tiny_config.with_overrides(max_epochs=1), prepared_dataset, tmp_path / "a").train()
        second = Trainer(tiny_config.with_overrides(max_epochs=1, seed=1), prepared_dataset, tmp_path / "b").train()
        assert first.checkpoint.read_bytes() != second.checkpoint.read_bytes()


class TestDivergence:
    """Non-finite losses abort with the last good checkpoint."""

    @pytest.mark.unit
    def test_nan_loss_restores_checkpoint(self, mocker, tmp_path, tiny_config, prepared_dataset) -> None:
        trainer = Trainer(tiny_config.with_overrides(max_epochs=1), prepared_dataset, tmp_path)
        trainer.train()
        saved = trainer.model.state_dict()
        mocker.patch.object(trainer.model, "loss", return_value=Tensor(np.nan, requires_grad=True))
        with pytest.raises(TrainingDivergedError) as info:
            trainer.train_epoch(2)
        assert info.value.checkpoint == trainer.checkpoint_path
        for name, values in trainer.model.state_dict().items():
            assert np.array_equal(values, saved[name])

    @pytest.mark.unit
    def test_nan_loss_without_checkpoint(self, mocker, tmp_path, tiny_config, prepared_dataset) -> None:
        trainer = Trainer(tiny_config, prepared_dataset, tmp_path)
        mocker.patch.object(trainer.model, "loss", return_value=Tensor(np.inf, requires_grad=True))
        with pytest.raises(TrainingDivergedError) as info:
            trainer.train()
        assert info.value.checkpoint is None


class TestAblations:
    """Every ablation variant builds and trains."""

    @pytest.mark.unit
    @pytest.mark.parametrize(
        "flag",
        [
            "no_adaptive",
            "no_transformer",
            "no_forward_graph",
            "no_backward_graph",
            "no_graphs",
            "no_augmented_residual",
        ],
    )
    def test_variant_trains_one_epoch(self, tmp_path, tiny_config, prepared_dataset, flag: str) -> None:
        config = tiny_config.with_overrides(max_epochs=1, **{flag: True})
        result = Trainer(config, prepared_dataset, tmp_path).train()
        assert result.epochs_run == 1
        assert np.isfinite(result.best_val_mae)
