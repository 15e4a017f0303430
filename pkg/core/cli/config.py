"""
Flat key=value experiment configs.

Files are parsed with python-dotenv (comments with '#', no interpolation)
and validated by ExperimentConfig. Dataset paths resolve against data_dir,
which defaults to $SEQMEM_DATA_DIR and then to the config file's directory.
"""
import logging
import os
from typing import Dict, Optional

from dotenv import dotenv_values
from pydantic import ValidationError

from core.exceptions import ConfigError
from core.models import ExperimentConfig

logger = logging.getLogger(__name__)

DATA_DIR_ENV = "SEQMEM_DATA_DIR"

MNIST_DEFAULT_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
REQUIRED_DATA_KEYS = ("train_images", "train_labels")


def read_config_file(path: str) -> Dict[str, str]:
    if not os.path.exists(path):
        raise ConfigError(f"config file {path} does not exist", key="--config")
    values = dotenv_values(path, interpolate=False)
    missing = [key for key, value in values.items() if value is None]
    if missing:
        raise ConfigError("line has no '=' value", key=missing[0])
    return dict(values)


def _validation_error(exc: ValidationError) -> ConfigError:
    first = exc.errors()[0]
    key = ".".join(str(part) for part in first.get("loc", ())) or None
    if first.get("type") == "extra_forbidden":
        return ConfigError("unknown configuration key", key=key)
    return ConfigError(first.get("msg", str(exc)), key=key)


def _resolve(base: str, candidate: str) -> Optional[str]:
    """Existing path for `candidate` (absolute or under base), also trying a .gz sibling."""
    path = candidate if os.path.isabs(candidate) else os.path.join(base, candidate)
    for option in (path, path + ".gz"):
        if os.path.exists(option):
            return os.path.abspath(option)
    return None


def resolve_data_paths(config: ExperimentConfig, config_dir: str) -> ExperimentConfig:
    if config.task == "synthetic":
        return config
    data_dir = config.data_dir or os.getenv(DATA_DIR_ENV) or config_dir
    if not os.path.isdir(data_dir):
        raise ConfigError(f"data directory {data_dir} does not exist", key="data_dir")

    updates = {"data_dir": os.path.abspath(data_dir)}
    for key, default in MNIST_DEFAULT_FILES.items():
        given = getattr(config, key)
        resolved = _resolve(data_dir, given or default)
        if resolved is None:
            if given or key in REQUIRED_DATA_KEYS:
                raise ConfigError(f"path {given or default} not found under {data_dir}", key=key)
            logger.info("No %s found under %s; running without a test split", key, data_dir)
            continue
        updates[key] = resolved
    return config.model_copy(update=updates)


def load_config(path: str, overrides: Optional[Dict[str, object]] = None) -> ExperimentConfig:
    """Reads, validates and path-resolves a config file; `overrides` win over file values."""
    values: Dict[str, object] = dict(read_config_file(path))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        config = ExperimentConfig(**values)
    except ValidationError as exc:
        raise _validation_error(exc) from exc
    return resolve_data_paths(config, os.path.dirname(os.path.abspath(path)))


def write_config_file(path: str, values: Dict[str, object]) -> None:
    """Writes a flat config that read_config_file parses back to the same strings."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for key, value in values.items():
            if isinstance(value, (tuple, list)):
                value = ",".join(str(v) for v in value)
            handle.write(f"{key}={value}\n")
