"""
Unit Tests for Core Configuration

Tests the Settings class and the experiment configuration:
- Default values
- Environment variable overrides
- Validators (DEBUG, DTR_THREADS)
- Flat key = value config files and ablation consistency
- Tool sections in pyproject.toml match the dev dependencies
"""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

import pytest

from app.core.config import Settings
from app.core.exceptions import ConfigurationError
from app.models.config import TrainConfig, build_config, dump_config, load_config, parse_config_text


class TestSettings:
    """Tests for process-level settings."""

    @pytest.mark.unit
    def test_debug_flag_parsed(self) -> None:
        from app.core.config import settings

        # In test env, DEBUG is set to True by conftest.py
        assert settings.DEBUG is True

    @pytest.mark.unit
    @pytest.mark.parametrize("raw, expected", [("true", True), ("1", True), ("on", True), ("no", False)])
    def test_parse_debug_strings(self, raw: str, expected: bool) -> None:
        assert Settings.parse_debug(raw) is expected

    @pytest.mark.unit
    def test_parse_debug_bool_passthrough(self) -> None:
        assert Settings.parse_debug(False) is False

    @pytest.mark.unit
    def test_threads_from_environment(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("DTR_THREADS", "3")
        assert Settings().DTR_THREADS == 3

    @pytest.mark.unit
    def test_threads_clamped_to_one(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("DTR_THREADS", "0")
        assert Settings().DTR_THREADS == 1

    @pytest.mark.unit
    def test_default_prefetch(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.delenv("DTR_PREFETCH", raising=False)
        assert Settings().DTR_PREFETCH == 2


class TestTrainConfigDefaults:
    """Defaults match the published training setup."""

    @pytest.mark.unit
    def test_optimisation_defaults(self) -> None:
        config = TrainConfig()
        assert config.lr == 0.001
        assert config.batch_size == 16
        assert config.patience == 10
        assert config.max_epochs == 200
        assert config.clip_norm == 5.0

    @pytest.mark.unit
    def test_model_widths(self) -> None:
        config = TrainConfig()
        assert config.d_e == 96
        assert config.d_model == 196
        assert config.heads == 4
        assert config.layers == 3

    @pytest.mark.unit
    def test_ratios(self) -> None:
        assert TrainConfig().ratios == (0.6, 0.2, 0.2)

    @pytest.mark.unit
    def test_graph_switches(self) -> None:
        assert TrainConfig(no_forward_graph=True).use_forward_graph is False
        assert TrainConfig(no_forward_graph=True).use_backward_graph is True
        both = TrainConfig(no_graphs=True)
        assert not (both.use_forward_graph or both.use_backward_graph)


class TestTrainConfigValidation:
    """Invalid combinations surface as ConfigurationError."""

    @pytest.mark.unit
    def test_unknown_key_rejected(self) -> None:
        with pytest.raises(ConfigurationError, match="learning_rate"):
            build_config({"learning_rate": 0.1})

    @pytest.mark.unit
    def test_non_positive_lr_rejected(self) -> None:
        with pytest.raises(ConfigurationError):
            build_config({"lr": 0})

    @pytest.mark.unit
    def test_zero_patience_rejected(self) -> None:
        with pytest.raises(ConfigurationError):
            build_config({"patience": 0})

    @pytest.mark.unit
    def test_heads_must_divide_width(self) -> None:
        with pytest.raises(ConfigurationError, match="divisible"):
            build_config({"d_f": 4, "d_a": 7, "heads": 2})

    @pytest.mark.unit
    def test_ratios_must_sum_to_one(self) -> None:
        with pytest.raises(ConfigurationError, match="sum to 1"):
            build_config({"train_ratio": 0.5, "val_ratio": 0.2, "test_ratio": 0.2})

    @pytest.mark.unit
    def test_no_adaptive_without_graphs_rejected(self) -> None:
        with pytest.raises(ConfigurationError, match="fusion"):
            build_config({"no_adaptive": True, "no_graphs": True})

    @pytest.mark.unit
    def test_with_overrides_ignores_none(self) -> None:
        config = TrainConfig().with_overrides(lr=0.01, seed=None)
        assert config.lr == 0.01
        assert config.seed == 0


class TestConfigFiles:
    """Flat key = value text files."""

    @pytest.mark.unit
    def test_parse_with_comments(self) -> None:
        values = parse_config_text("# header\nlr = 0.01  # faster\n\nno_graphs = true\n")
        assert values == {"lr": "0.01", "no_graphs": "true"}

    @pytest.mark.unit
    def test_missing_equals_rejected(self) -> None:
        with pytest.raises(ConfigurationError, match="line 1"):
            parse_config_text("lr 0.01")

    @pytest.mark.unit
    def test_duplicate_key_rejected(self) -> None:
        with pytest.raises(ConfigurationError, match="duplicate"):
            parse_config_text("lr = 0.1\nlr = 0.2")

    @pytest.mark.unit
    def test_load_with_overrides(self, tmp_path) -> None:
        path = tmp_path / "exp.txt"
        path.write_text("batch_size = 32\nsigma = none\nseed = 4\n")
        config = load_config(path, seed=9)
        assert config.batch_size == 32
        assert config.sigma is None
        assert config.seed == 9

    @pytest.mark.unit
    def test_missing_file(self, tmp_path) -> None:
        with pytest.raises(ConfigurationError, match="not found"):
            load_config(tmp_path / "absent.txt")

    @pytest.mark.unit
    def test_dump_then_load(self, tmp_path) -> None:
        original = build_config({"no_transformer": True, "d_a": 12, "heads": 2, "n_d": 24})
        path = tmp_path / "config.txt"
        path.write_text(dump_config(original))
        assert load_config(path) == original


class TestProjectMetadata:
    """Tool sections in pyproject.toml."""

    PYPROJECT = Path(__file__).resolve().parents[2] / "pyproject.toml"
    CONFIG_ONLY_TOOLS = {"setuptools", "pytest", "coverage"}

    @pytest.mark.unit
    def test_configured_tools_are_dev_dependencies(self) -> None:
        project = tomllib.loads(self.PYPROJECT.read_text())
        dev = {spec.split(">")[0].split("=")[0] for spec in project["project"]["optional-dependencies"]["dev"]}
        configured = set(project["tool"]) - self.CONFIG_ONLY_TOOLS
        assert "isort" not in configured
        assert configured <= dev
