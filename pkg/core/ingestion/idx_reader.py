"""
Reader for the big-endian IDX container used by the MNIST distribution.

Layout: 4-byte magic (0x0000 + type code + rank), `rank` dimension sizes as
u32 big-endian, then the raw payload. Only unsigned-byte payloads are used
here. gzip-compressed files are detected by their 0x1f8b prefix.
"""
import gzip
import logging
import os
import struct
from typing import Tuple

import numpy as np

from core.exceptions import DatasetError, IdxFormatError

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
GZIP_PREFIX = b"\x1f\x8b"


def _read_bytes(path: str) -> bytes:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "rb") as handle:
        raw = handle.read()
    if raw[:2] == GZIP_PREFIX:
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise IdxFormatError(f"corrupt gzip stream ({exc})", path, 0) from exc
    return raw


def read_idx(path: str, expected_magic: int) -> np.ndarray:
    """Parses one IDX file into a uint8 array shaped by its header dimensions."""
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise IdxFormatError("file too short for a magic number", path, len(raw))
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic != expected_magic:
        raise IdxFormatError(f"bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}", path, 0)

    rank = magic & 0xFF
    header_end = 4 + 4 * rank
    if len(raw) < header_end:
        raise IdxFormatError(f"truncated header: need {rank} dimension sizes", path, len(raw))
    dims = struct.unpack_from(f">{rank}I", raw, 4)

    payload = int(np.prod(dims, dtype=np.int64))
    available = len(raw) - header_end
    if available < payload:
        raise IdxFormatError(
            f"truncated payload: expected {payload} bytes, found {available}",
            path,
            len(raw),
        )
    if available > payload:
        logger.warning("%s has %d trailing bytes after the IDX payload", path, available - payload)
    data = np.frombuffer(raw, dtype=np.uint8, count=payload, offset=header_end)
    return data.reshape(dims).copy()


def load_idx(images_path: str, labels_path: str) -> Tuple[np.ndarray, np.ndarray]:
    """
    Loads an image file and its label file.

    Returns:
        (images uint8 (N, H, W), labels uint8 (N,))
    """
    images = read_idx(images_path, IMAGES_MAGIC)
    labels = read_idx(labels_path, LABELS_MAGIC)
    if images.ndim != 3:
        raise IdxFormatError(f"image file must have rank 3, got {images.ndim}", images_path, 3)
    if labels.ndim != 1:
        raise IdxFormatError(f"label file must have rank 1, got {labels.ndim}", labels_path, 3)
    if images.shape[0] != labels.shape[0]:
        raise DatasetError(
            f"count mismatch: {images.shape[0]} images in {images_path} "
            f"but {labels.shape[0]} labels in {labels_path}"
        )
    logger.info("📥 Loaded %d images of %dx%d from %s", *images.shape, images_path)
    return images, labels
