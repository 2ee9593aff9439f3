"""
Unit Tests for the Optimizer and the Persistence Baseline

Tests:
- Adam update rule against a scalar loop
- Finite-gradient guard and global-norm clipping
- Early-stopping bookkeeping
- Historical Inertia forecasts
"""

import math

import numpy as np
import pytest

from app.core.exceptions import NonFiniteGradientError
from app.models.traffic import NormStats, SampleBatch
from app.services.baseline import hi_baseline
from app.services.metrics import evaluate
from app.services.optimizer import TrainState, adam_step, clip_grad_norm
from app.tensor.tensor import Tensor


def _params(*values: list[float]) -> dict[str, Tensor]:
    return {f"p{i}": Tensor(v, requires_grad=True, dtype=np.float64) for i, v in enumerate(values)}


class TestAdam:
    """Update rule."""

    @pytest.mark.unit
    def test_zero_gradient(self) -> None:
        params = _params([1.0, -2.0])
        state = TrainState()
        adam_step(params, {"p0": np.zeros(2)}, state, lr=0.1)
        assert np.array_equal(params["p0"].data, [1.0, -2.0])
        assert state.step == 1
        assert np.array_equal(state.first_moment["p0"], np.zeros(2))

    @pytest.mark.unit
    def test_first_step_moves_by_lr(self) -> None:
        params = _params([0.0, 0.0, 0.0])
        adam_step(params, {"p0": np.array([3.0, -0.02, 250.0])}, TrainState(), lr=0.01)
        assert np.allclose(params["p0"].data, [-0.01, 0.01, -0.01], atol=1e-8)

    @pytest.mark.unit
    def test_scalar_oracle(self) -> None:
        params = _params([1.0])
        state = TrainState()
        for _ in range(10):
            x = params["p0"].data[0]
            adam_step(params, {"p0": np.array([2.0 * x])}, state, lr=0.1)

        x, m, v = 1.0, 0.0, 0.0
        for t in range(1, 11):
            g = 2.0 * x
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            m_hat = m / (1.0 - 0.9**t)
            v_hat = v / (1.0 - 0.999**t)
            x -= 0.1 * m_hat / (math.sqrt(v_hat) + 1e-8)
        assert params["p0"].data[0] == pytest.approx(x, abs=1e-10)
        assert state.step == 10

    @pytest.mark.unit
    def test_moments_match_parameter_shapes(self) -> None:
        params = _params([[1.0, 2.0], [3.0, 4.0]], [0.5])
        state = TrainState()
        adam_step(params, {"p0": np.ones((2, 2)), "p1": np.ones(1)}, state, lr=0.1)
        assert state.first_moment["p0"].shape == (2, 2)
        assert state.second_moment["p1"].shape == (1,)

    @pytest.mark.unit
    def test_non_finite_gradient_moves_nothing(self) -> None:
        params = _params([1.0], [2.0])
        state = TrainState()
        grads = {"p0": np.array([0.5]), "p1": np.array([np.nan])}
        with pytest.raises(NonFiniteGradientError) as info:
            adam_step(params, grads, state, lr=0.1)
        assert info.value.source == "p1"
        assert params["p0"].data[0] == 1.0
        assert state.step == 0
        assert not state.first_moment


class TestClipping:
    """Global-norm clipping."""

    @pytest.mark.unit
    def test_within_norm_unchanged(self) -> None:
        grads = {"a": np.array([0.3, 0.4])}
        clipped, norm = clip_grad_norm(grads, 5.0)
        assert norm == pytest.approx(0.5)
        assert np.array_equal(clipped["a"], grads["a"])

    @pytest.mark.unit
    def test_joint_norm_scaled(self) -> None:
        clipped, norm = clip_grad_norm({"a": np.array([3.0, 0.0]), "b": np.array([4.0])}, 1.0)
        assert norm == pytest.approx(5.0)
        joint = math.sqrt(sum(float(np.sum(g**2)) for g in clipped.values()))
        assert joint == pytest.approx(1.0, abs=1e-6)
        assert clipped["a"][0] / clipped["b"][0] == pytest.approx(0.75)


class TestTrainState:
    """Early-stopping bookkeeping."""

    @pytest.mark.unit
    def test_improvement_resets_counter(self) -> None:
        state = TrainState(epoch=1)
        assert state.record_validation(5.0)
        state.epoch = 2
        assert not state.record_validation(5.0)
        assert state.epochs_since_improvement == 1
        state.epoch = 3
        assert state.record_validation(4.0)
        assert (state.best_val_mae, state.best_epoch, state.epochs_since_improvement) == (4.0, 3, 0)

    @pytest.mark.unit
    def test_should_stop(self) -> None:
        state = TrainState(epochs_since_improvement=2)
        assert not state.should_stop(3)
        state.epochs_since_improvement = 3
        assert state.should_stop(3)


def _ramp_batch(slope: float, step: float) -> SampleBatch:
    series = slope * step * np.arange(24, dtype=np.float64)
    values = np.broadcast_to(series[:, None, None], (24, 3, 1))
    return SampleBatch(
        x=values[None, :12].copy(),
        y=values[None, 12:].copy(),
        tod=np.zeros((1, 12), dtype=np.int64),
        dow=np.zeros((1, 12), dtype=np.int64),
        starts=np.zeros(1, dtype=np.int64),
    )


class TestHistoricalInertia:
    """Persistence forecasts."""

    @pytest.mark.unit
    def test_constant_series(self) -> None:
        batch = SampleBatch(
            x=np.zeros((2, 12, 3, 1)),
            y=np.full((2, 12, 3, 1), 42.0),
            tod=np.zeros((2, 12), dtype=np.int64),
            dow=np.zeros((2, 12), dtype=np.int64),
            starts=np.arange(2),
        )
        prediction = hi_baseline(batch, NormStats(mean=[42.0], std=[7.0]))
        assert prediction.shape == (2, 12, 3, 1)
        assert evaluate(prediction, batch.y).mae == 0.0

    @pytest.mark.unit
    @pytest.mark.parametrize("slope, step", [(1.0, 1.0), (0.5, 5.0), (-2.0, 0.25)])
    def test_linear_ramp(self, slope: float, step: float) -> None:
        batch = _ramp_batch(slope, step)
        prediction = hi_baseline(batch, NormStats(mean=[0.0], std=[1.0]))
        assert evaluate(prediction, batch.y).mae == pytest.approx(6.5 * abs(slope) * step)

    @pytest.mark.unit
    def test_denormalizes_last_step(self) -> None:
        batch = _ramp_batch(1.0, 1.0)
        prediction = hi_baseline(batch, NormStats(mean=[100.0], std=[2.0]), t_out=3)
        assert prediction.shape == (1, 3, 3, 1)
        assert np.all(prediction == 100.0 + 2.0 * 11.0)
