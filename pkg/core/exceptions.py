"""
Error types shared across the toolkit.
The CLI maps these onto process exit codes (see core/cli/main.py).
"""
from typing import Optional


class SeqmemError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(SeqmemError):
    """Raised when matrix or sequence dimensions do not line up."""


class ConfigError(SeqmemError):
    """Invalid experiment configuration. `key` names the offending entry when known."""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        if key:
            message = f"{key}: {message}"
        super().__init__(message)


class DatasetError(SeqmemError):
    """Dataset could not be read or is inconsistent."""


class IdxFormatError(DatasetError):
    """Malformed IDX file. `offset` is the byte position where parsing failed."""

    def __init__(self, message: str, path: str, offset: int):
        self.path = path
        self.offset = offset
        super().__init__(f"{path} @ offset {offset}: {message}")


class CheckpointError(SeqmemError):
    """Checkpoint container is corrupt or incomplete."""


class DivergenceError(SeqmemError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: Optional[int] = None, step: Optional[int] = None):
        self.epoch = epoch
        self.step = step
        super().__init__(message)
