"""
Unit Tests for the Synthetic Generator

Tests:
- Shapes, calendar alignment and non-negativity
- Byte-identical output for a fixed seed
- Daily and weekly periodicity without noise
- A per-node harmonic fit recovering the noiseless signal
"""

import numpy as np
import pytest
from sklearn.linear_model import LinearRegression

from app.core.exceptions import DataValidationError
from app.data.synthetic import SYNTH_START_EPOCH, synth_generate, write_synthetic
from app.data.traffic_io import read_edges_csv, read_traffic
from app.data.windows import calendar_indices


class TestShapes:
    """Basic layout."""

    @pytest.mark.unit
    def test_series_shape(self, hourly_synthetic) -> None:
        assert hourly_synthetic.series.values.shape == (144, 4, 1)
        assert hourly_synthetic.series.steps_per_day == 24
        assert np.all(hourly_synthetic.series.values >= 0.0)

    @pytest.mark.unit
    def test_starts_on_monday_midnight(self, hourly_synthetic) -> None:
        assert hourly_synthetic.series.start_epoch == SYNTH_START_EPOCH
        assert calendar_indices(SYNTH_START_EPOCH, 3600, 0) == (0, 0)

    @pytest.mark.unit
    def test_edges_symmetric(self) -> None:
        edges = synth_generate(n_nodes=12, n_days=1, seed=2, step_seconds=3600).edges
        listed = {(a, b): d for a, b, d in edges}
        assert all(listed[(b, a)] == d for (a, b), d in listed.items())
        assert all(d >= 0 for d in listed.values())

    @pytest.mark.unit
    @pytest.mark.parametrize(
        "kwargs, message",
        [
            ({"n_nodes": 1, "n_days": 2}, "at least 2 nodes"),
            ({"n_nodes": 4, "n_days": 0}, "n_days"),
            ({"n_nodes": 4, "n_days": 2, "weekly_amplitude": 1.0}, "weekly_amplitude"),
            ({"n_nodes": 4, "n_days": 2, "step_seconds": 7}, "86400"),
        ],
    )
    def test_invalid_arguments(self, kwargs, message) -> None:
        with pytest.raises(DataValidationError, match=message):
            synth_generate(seed=0, **kwargs)


class TestDeterminism:
    """Fixed seeds reproduce files exactly."""

    @pytest.mark.unit
    def test_same_seed_same_bytes(self, tmp_path) -> None:
        first = write_synthetic(tmp_path / "a", synth_generate(6, 2, seed=7, step_seconds=1800))
        second = write_synthetic(tmp_path / "b", synth_generate(6, 2, seed=7, step_seconds=1800))
        for left, right in zip(first, second):
            assert left.read_bytes() == right.read_bytes()

    @pytest.mark.unit
    def test_different_seed_differs(self) -> None:
        a = synth_generate(6, 2, seed=7, step_seconds=1800).series.values
        b = synth_generate(6, 2, seed=8, step_seconds=1800).series.values
        assert not np.array_equal(a, b)

    @pytest.mark.unit
    def test_files_readable(self, tmp_path) -> None:
        dataset = synth_generate(5, 2, seed=1, step_seconds=3600)
        data_path, adj_path = write_synthetic(tmp_path, dataset)
        assert np.array_equal(read_traffic(data_path).values, dataset.series.values)
        assert read_edges_csv(adj_path) == dataset.edges


class TestPeriodicity:
    """Noiseless series repeat."""

    @pytest.mark.unit
    def test_daily_period_without_weekly_effect(self) -> None:
        values = synth_generate(5, 3, seed=4, noise=0.0, weekly_amplitude=0.0, step_seconds=3600).series.values
        assert np.allclose(values[:24], values[24:48], atol=1e-4)
        assert np.allclose(values[:24], values[48:72], atol=1e-4)

    @pytest.mark.unit
    def test_weekly_period(self) -> None:
        values = synth_generate(5, 14, seed=4, noise=0.0, step_seconds=3600).series.values
        assert np.allclose(values[: 7 * 24], values[7 * 24:], atol=1e-4)
        # weekend (days 5, 6) damped relative to Monday
        monday = values[:24].std(axis=0)
        saturday = values[5 * 24:6 * 24].std(axis=0)
        assert np.all(saturday < monday)

    @pytest.mark.unit
    def test_harmonic_fit_recovers_signal(self) -> None:
        series = synth_generate(6, 4, seed=5, noise=0.0, weekly_amplitude=0.0, step_seconds=3600).series
        angle = 2.0 * np.pi * np.arange(series.n_steps) / 24
        features = np.column_stack([np.sin(angle), np.cos(angle)])
        for node in range(series.n_nodes):
            target = series.values[:, node, 0]
            fit = LinearRegression().fit(features[:48], target[:48])
            residual = np.abs(fit.predict(features[48:]) - target[48:])
            assert residual.mean() < 1e-3

    @pytest.mark.unit
    def test_noise_level(self) -> None:
        clean = synth_generate(5, 2, seed=4, noise=0.0, step_seconds=3600).series.values
        noisy = synth_generate(5, 2, seed=4, noise=5.0, step_seconds=3600).series.values
        assert np.std(noisy - clean) == pytest.approx(5.0, rel=0.25)
