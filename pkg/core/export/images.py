import os

import numpy as np
from PIL import Image


def to_gray_bytes(image: np.ndarray) -> np.ndarray:
    """Clips values to [0, 1] and maps them onto 0..255."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {arr.shape}")
    return np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path: str, image: np.ndarray) -> None:
    """Binary PGM (P5, maxval 255) of an image with values in [0, 1]."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    Image.fromarray(to_gray_bytes(image)).save(path, format="PPM")


def read_pgm(path: str) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.float64) / 255.0
