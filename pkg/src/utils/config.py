"""Configuration files, environment defaults and logging setup."""

import logging
import os
from pathlib import Path
from typing import Dict, Optional

from dotenv import dotenv_values, load_dotenv

from .validators import ConfigurationError

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

_PACKAGE_DATA = Path(__file__).resolve().parent.parent / "data"


def load_log_level() -> str:
    """Load the logging level from environment variables.

    Returns:
        Level name such as "INFO" or "DEBUG"

    Note:
        Falls back to INFO if IHCE_LOG_LEVEL is not set
    """
    load_dotenv()
    return os.getenv("IHCE_LOG_LEVEL", "INFO").upper()


def get_default_seed() -> int:
    """Get the default random seed from environment variables.

    Raises:
        ConfigurationError: If IHCE_SEED is set but not an integer
    """
    load_dotenv()
    raw = os.getenv("IHCE_SEED", "0")
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigurationError(f"IHCE_SEED must be an integer, got {raw!r}") from e


def get_block_table_path() -> Path:
    """Get the ICD-9 block table used for a fourth (topmost) level.

    Note:
        Falls back to the packaged chapter table if IHCE_BLOCK_TABLE is not set
    """
    load_dotenv()
    override = os.getenv("IHCE_BLOCK_TABLE")
    if override:
        return Path(override)
    return _PACKAGE_DATA / "icd9_blocks.tsv"


def configure_logging(level: Optional[str] = None) -> None:
    """Configure the root logger once for CLI and app entry points.

    Args:
        level: Level name; defaults to ``load_log_level()``
    """
    name = (level or load_log_level()).upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        raise ConfigurationError(f"Unknown log level {name!r}")
    logging.basicConfig(level=numeric, format=LOG_FORMAT, force=True)


def load_config_file(path: Path) -> Dict[str, str]:
    """Read a flat ``key=value`` configuration file.

    Keys are normalised to lowercase with dashes replaced by underscores so
    that they line up with command-line option destinations.

    Args:
        path: Config file path

    Returns:
        Mapping of normalised key to raw string value

    Raises:
        ConfigurationError: If the file is missing or a key has no value

    Example:
        >>> load_config_file(Path("train.cfg"))  # contains "learning-rate=0.01"
        {'learning_rate': '0.01'}
    """
    if not path.is_file():
        raise ConfigurationError(f"Config file not found: {path}")
    values: Dict[str, str] = {}
    for key, value in dotenv_values(path).items():
        if value is None:
            raise ConfigurationError(f"Config key {key!r} in {path} has no value")
        values[key.strip().lower().replace("-", "_")] = value.strip()
    return values


def parse_bool(key: str, raw: str) -> bool:
    """Interpret a config-file boolean.

    Raises:
        ConfigurationError: If the text is not a recognised boolean
    """
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"Config key {key!r} expects a boolean, got {raw!r}")
