"""Unit tests for environment defaults, config files and logging setup."""

import logging
from pathlib import Path

import pytest

from src.utils.config import (
    configure_logging,
    get_block_table_path,
    get_default_seed,
    load_config_file,
    load_log_level,
    parse_bool,
)
from src.utils.validators import ConfigurationError


class TestEnvironment:
    """Environment-variable defaults."""

    def test_log_level(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("IHCE_LOG_LEVEL", "debug")
        assert load_log_level() == "DEBUG"

    def test_seed(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("IHCE_SEED", "42")
        assert get_default_seed() == 42

    def test_bad_seed(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("IHCE_SEED", "forty-two")
        with pytest.raises(ConfigurationError):
            get_default_seed()

    def test_block_table_override(self, monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
        monkeypatch.setenv("IHCE_BLOCK_TABLE", str(tmp_path / "blocks.tsv"))
        assert get_block_table_path() == tmp_path / "blocks.tsv"

    def test_packaged_block_table(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("IHCE_BLOCK_TABLE", "")
        path = get_block_table_path()
        assert path.name == "icd9_blocks.tsv"
        assert path.is_file()


class TestConfigFile:
    """Flat key=value files."""

    def test_keys_are_normalised(self, tmp_path: Path) -> None:
        path = tmp_path / "train.cfg"
        path.write_text(
            "# training run\nlearning-rate=0.01\nBATCH_SIZE = 8\nno-dpu=true\n", encoding="utf-8"
        )
        assert load_config_file(path) == {
            "learning_rate": "0.01",
            "batch_size": "8",
            "no_dpu": "true",
        }

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(ConfigurationError):
            load_config_file(tmp_path / "absent.cfg")

    def test_key_without_value(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.cfg"
        path.write_text("levels\n", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="levels"):
            load_config_file(path)

    @pytest.mark.parametrize("raw,expected", [("yes", True), ("1", True), ("Off", False)])
    def test_parse_bool(self, raw: str, expected: bool) -> None:
        assert parse_bool("no_orl", raw) is expected

    def test_parse_bool_rejects(self) -> None:
        with pytest.raises(ConfigurationError):
            parse_bool("no_orl", "maybe")


class TestLogging:
    """Root logger configuration."""

    def test_sets_level(self) -> None:
        configure_logging("WARNING")
        assert logging.getLogger().level == logging.WARNING
        configure_logging("INFO")

    def test_unknown_level(self) -> None:
        with pytest.raises(ConfigurationError):
            configure_logging("LOUD")
