"""
Unit Tests for the Composed Forecaster

Tests:
- Output shapes and de-normalization
- Which blocks each ablation switch removes
- Finite-difference agreement of the full loss in 64-bit mode
- Checkpoint save / load through the model
"""

import numpy as np
import pytest

from app.core.exceptions import CheckpointError, ShapeMismatchError
from app.models.traffic import NormStats
from app.nn.dtrformer import build_model
from app.services.diagnostics import MODEL_TOLERANCE, build_gradcheck_instance, model_gradient_check
from app.tensor.tensor import Tape


@pytest.fixture
def model(tiny_config, prepared_dataset):
    return build_model(tiny_config, prepared_dataset.n_nodes, prepared_dataset.n_channels, prepared_dataset.steps_per_day)


class TestForward:
    """Shapes and units."""

    @pytest.mark.unit
    def test_prediction_shape(self, model, random_batch, prepared_dataset) -> None:
        out = model.predict(random_batch, prepared_dataset.graph, prepared_dataset.stats)
        assert out.shape == (2, 12, 4, 1)
        assert np.all(np.isfinite(out.data))

    @pytest.mark.unit
    def test_zero_head_predicts_channel_mean(self, model, random_batch, prepared_dataset) -> None:
        model.head.proj.weight.assign(np.zeros(model.head.proj.weight.shape))
        model.head.proj.bias.assign(np.zeros(model.head.proj.bias.shape))
        stats = NormStats(mean=[123.5], std=[20.0])
        out = model.predict(random_batch, prepared_dataset.graph, stats)
        assert np.allclose(out.data, 123.5)

    @pytest.mark.unit
    def test_loss_is_mae_in_original_units(self, model, random_batch, prepared_dataset) -> None:
        prediction = model.predict(random_batch, prepared_dataset.graph, prepared_dataset.stats).data
        loss = model.loss(random_batch, prepared_dataset.graph, prepared_dataset.stats).item()
        assert loss == pytest.approx(float(np.mean(np.abs(prediction - random_batch.y))), rel=1e-5)

    @pytest.mark.unit
    def test_wrong_node_count(self, model, random_batch, prepared_dataset) -> None:
        random_batch.x = random_batch.x[:, :, :3]
        with pytest.raises(ShapeMismatchError, match="do not match model"):
            model(random_batch, prepared_dataset.graph)

    @pytest.mark.unit
    def test_every_parameter_receives_gradient(self, model, random_batch, prepared_dataset) -> None:
        params = model.named_parameters()
        with Tape() as tape:
            loss = model.loss(random_batch, prepared_dataset.graph, prepared_dataset.stats)
        grads = tape.gradient(loss, params)
        silent = [name for name, grad in grads.items() if not np.any(grad)]
        # calendar rows not indexed by this batch are the only exceptions
        assert set(silent) <= {"embedding.dict_w", "embedding.dict_d"}


class TestAblationStructure:
    """Blocks present under each switch."""

    @pytest.mark.unit
    def test_full_model(self, model) -> None:
        names = model.named_parameters()
        assert "embedding.e_adaptive" in names
        assert any(n.startswith("dst2former.cross.") for n in names)
        assert "graph_fusion.projection.fwd.weight" in names
        assert "graph_fusion.projection.bwd.weight" in names

    @pytest.mark.unit
    def test_no_transformer(self, tiny_config) -> None:
        model = build_model(tiny_config.with_overrides(no_transformer=True), 4, 1, 24)
        assert model.dst2former is None
        assert "embedding.e_adaptive" in model.named_parameters()

    @pytest.mark.unit
    def test_no_adaptive(self, tiny_config, random_batch, prepared_dataset) -> None:
        model = build_model(tiny_config.with_overrides(no_adaptive=True), 4, 1, 24)
        assert model.dst2former is None
        assert model.embedding.e_adaptive is None
        assert model.graph_fusion.fusion.width == 2 * tiny_config.d_n
        assert model(random_batch, prepared_dataset.graph).shape == (2, 12, 4, 1)

    @pytest.mark.unit
    def test_no_graphs(self, tiny_config, random_batch, prepared_dataset) -> None:
        model = build_model(tiny_config.with_overrides(no_graphs=True), 4, 1, 24)
        assert model.graph_fusion.projection.fwd is None
        assert model.graph_fusion.projection.bwd is None
        assert model.graph_fusion.fusion.width == tiny_config.d_a
        assert model(random_batch, prepared_dataset.graph).shape == (2, 12, 4, 1)

    @pytest.mark.unit
    def test_single_graph(self, tiny_config) -> None:
        model = build_model(tiny_config.with_overrides(no_backward_graph=True), 4, 1, 24)
        assert model.graph_fusion.projection.bwd is None
        assert model.graph_fusion.fusion.width == tiny_config.d_n + tiny_config.d_a

    @pytest.mark.unit
    def test_no_augmented_residual(self, tiny_config) -> None:
        model = build_model(tiny_config.with_overrides(no_augmented_residual=True), 4, 1, 24)
        assert all(not layer.augmented for layer in model.graph_fusion.armsa.layers)

    @pytest.mark.unit
    def test_same_seed_same_parameters(self, tiny_config) -> None:
        a = build_model(tiny_config, 4, 1, 24).state_dict()
        b = build_model(tiny_config, 4, 1, 24).state_dict()
        assert all(np.array_equal(a[name], b[name]) for name in a)


class TestGradients:
    """Composed loss against central differences."""

    @pytest.mark.unit
    def test_instance_is_64_bit(self) -> None:
        instance = build_gradcheck_instance(seed=0)
        assert all(p.dtype == np.float64 for p in instance.model.named_parameters().values())
        assert instance.loss().dtype == np.float64

    @pytest.mark.unit
    def test_model_gradient_check(self) -> None:
        report = model_gradient_check(seed=0, n_samples=50)
        assert report.checked == 50
        assert report.max_relative_error <= MODEL_TOLERANCE, report.worst


class TestCheckpoint:
    """Model-level save and load."""

    @pytest.mark.unit
    def test_round_trip(self, tmp_path, model, tiny_config) -> None:
        path = model.save(tmp_path / "best.dtrp")
        other = build_model(tiny_config.with_overrides(seed=5), 4, 1, 24)
        other.load(path)
        original = model.state_dict()
        assert all(np.array_equal(v, original[k]) for k, v in other.state_dict().items())

    @pytest.mark.unit
    def test_ablation_mismatch(self, tmp_path, model, tiny_config) -> None:
        path = model.save(tmp_path / "best.dtrp")
        other = build_model(tiny_config.with_overrides(no_adaptive=True), 4, 1, 24)
        with pytest.raises(CheckpointError):
            other.load(path)
