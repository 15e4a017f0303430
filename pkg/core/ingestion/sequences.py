"""
Turns image collections into pixel-stream sequence datasets: row-major scans,
fixed permutations, mean-pool downsampling, scaling and stratified splits.
"""
import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.exceptions import DatasetError, ShapeError
from core.ingestion.idx_reader import load_idx
from core.laes.batch import SequenceBatch
from core.numerics import SplitMix64

logger = logging.getLogger(__name__)

MNIST_CLASSES = 10


class LabeledSequences(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    batch: SequenceBatch
    labels: np.ndarray
    n_classes: int = Field(MNIST_CLASSES, ge=2)

    @model_validator(mode="after")
    def _validate(self) -> "LabeledSequences":
        if self.labels.ndim != 1 or self.labels.shape[0] != self.batch.n:
            raise ShapeError(f"{self.batch.n} sequences but labels of shape {self.labels.shape}")
        if np.any(self.labels < 0) or np.any(self.labels >= self.n_classes):
            raise DatasetError(f"labels must lie in [0, {self.n_classes})")
        return self

    def __len__(self) -> int:
        return self.batch.n

    def take(self, indices: Sequence[int]) -> "LabeledSequences":
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            raise DatasetError("cannot take an empty subset")
        return LabeledSequences(
            batch=self.batch.subset(idx),
            labels=self.labels[idx].copy(),
            n_classes=self.n_classes,
        )


class DatasetSplits(BaseModel):
    """Train / validation / test partitions plus the preprocessing that produced them."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    train: LabeledSequences
    val: Optional[LabeledSequences] = None
    test: Optional[LabeledSequences] = None
    scale: str = "unit"
    pixel_mean: Optional[float] = None
    pixel_std: Optional[float] = None
    permutation: Optional[np.ndarray] = None


def take(dataset: LabeledSequences, indices: Sequence[int]) -> LabeledSequences:
    return dataset.take(indices)


def fixed_permutation(n: int, seed: int) -> np.ndarray:
    """Fisher-Yates over range(n) driven by SplitMix64(seed); identical on every platform."""
    if n < 1:
        raise ValueError(f"permutation length must be >= 1, got {n}")
    return np.array(SplitMix64(seed).shuffle(list(range(n))), dtype=np.int64)


def pixel_streams(images: np.ndarray, downsample: int = 1) -> np.ndarray:
    """(N, H, W) uint8 images to (N, P) row-major pixel streams in [0, 1]."""
    arr = np.asarray(images)
    if arr.ndim != 3:
        raise ShapeError(f"images must be (N, H, W), got {arr.shape}")
    values = arr.astype(np.float64) / 255.0
    if downsample > 1:
        n, h, w = values.shape
        h_out, w_out = h // downsample, w // downsample
        if h_out == 0 or w_out == 0:
            raise ShapeError(f"downsample factor {downsample} larger than {h}x{w} images")
        cropped = values[:, : h_out * downsample, : w_out * downsample]
        values = cropped.reshape(n, h_out, downsample, w_out, downsample).mean(axis=(2, 4))
    return values.reshape(values.shape[0], -1)


def pixel_stats(images: np.ndarray, downsample: int = 1) -> Tuple[float, float]:
    streams = pixel_streams(images, downsample)
    std = float(streams.std())
    return float(streams.mean()), std if std > 0 else 1.0


def make_sequences(
    images: np.ndarray,
    labels,
    permutation: Optional[Sequence[int]] = None,
    scale: str = "unit",
    downsample: int = 1,
    stats: Optional[Tuple[float, float]] = None,
    n_classes: int = MNIST_CLASSES,
) -> LabeledSequences:
    """
    Serializes each image one pixel at a time (d = 1).

    `permutation[j]` is the flattened pixel index emitted at step j. In
    "centered" mode values become (x - mean) / std using `stats`, which should
    come from the training images; they are computed from `images` when omitted.
    """
    streams = pixel_streams(images, downsample)
    if permutation is not None:
        perm = np.asarray(permutation, dtype=np.int64)
        if perm.shape != (streams.shape[1],):
            raise ShapeError(
                f"permutation length {perm.size} != {streams.shape[1]} pixels per sequence"
            )
        streams = streams[:, perm]
    if scale == "centered":
        mean, std = stats if stats is not None else pixel_stats(images, downsample)
        streams = (streams - mean) / std
    elif scale != "unit":
        raise ValueError(f"unknown scale mode {scale!r}")
    return LabeledSequences(
        batch=SequenceBatch.from_array(streams[:, :, None]),
        labels=np.asarray(labels, dtype=np.int64).reshape(-1),
        n_classes=n_classes,
    )


def stratified_indices(labels, val_count: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Seeded stratified split of range(len(labels)).

    Each class contributes val_count * n_c / N validation items, with the
    remainders handed out by largest fractional part (ties to the lower class id).
    Returns sorted (train_idx, val_idx).
    """
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    n = y.size
    if val_count < 0 or val_count >= n:
        raise DatasetError(f"val_count must lie in [0, {n}), got {val_count}")
    if val_count == 0:
        return np.arange(n), np.zeros(0, dtype=np.int64)

    rng = np.random.default_rng(seed)
    classes, counts = np.unique(y, return_counts=True)
    exact = val_count * counts / n
    quotas = np.floor(exact).astype(np.int64)
    remainder = val_count - int(quotas.sum())
    order = sorted(range(classes.size), key=lambda i: (-(exact[i] - quotas[i]), classes[i]))
    for i in order[:remainder]:
        quotas[i] += 1

    val_parts = []
    for cls, quota in zip(classes, quotas):
        members = np.flatnonzero(y == cls)
        val_parts.append(rng.permutation(members)[:quota])
    val_idx = np.sort(np.concatenate(val_parts))
    train_mask = np.ones(n, dtype=bool)
    train_mask[val_idx] = False
    return np.flatnonzero(train_mask), val_idx


def split(
    dataset: LabeledSequences, val_count: int, seed: int
) -> Tuple[LabeledSequences, Optional[LabeledSequences]]:
    """Disjoint train/val split; val is None when val_count is 0."""
    train_idx, val_idx = stratified_indices(dataset.labels, val_count, seed)
    val = dataset.take(val_idx) if val_idx.size else None
    return dataset.take(train_idx), val


def load_mnist_split(
    train_images: str,
    train_labels: str,
    test_images: Optional[str] = None,
    test_labels: Optional[str] = None,
    permuted: bool = False,
    train_count: Optional[int] = None,
    val_count: int = 5000,
    test_count: Optional[int] = None,
    downsample: int = 1,
    scale: str = "unit",
    permutation_seed: int = 2020,
    seed: int = 0,
) -> DatasetSplits:
    """
    Loads MNIST IDX files into sequential (or permuted) train/val/test sets.
    The first `train_count` training images are split into train and val;
    centering statistics come from the train part only.
    """
    images, labels = load_idx(train_images, train_labels)
    if train_count is not None:
        images, labels = images[:train_count], labels[:train_count]
    train_idx, val_idx = stratified_indices(labels, val_count, seed)

    n_pixels = pixel_streams(images[:1], downsample).shape[1]
    permutation = fixed_permutation(n_pixels, permutation_seed) if permuted else None
    stats = pixel_stats(images[train_idx], downsample) if scale == "centered" else None

    def build(imgs, labs):
        return make_sequences(imgs, labs, permutation, scale, downsample, stats)

    train = build(images[train_idx], labels[train_idx])
    val = build(images[val_idx], labels[val_idx]) if val_idx.size else None
    test = None
    if test_images and test_labels:
        t_images, t_labels = load_idx(test_images, test_labels)
        if test_count is not None:
            t_images, t_labels = t_images[:test_count], t_labels[:test_count]
        test = build(t_images, t_labels)

    logger.info(
        "🗂️ MNIST split: train=%d val=%d test=%d, %d steps, scale=%s%s",
        len(train),
        0 if val is None else len(val),
        0 if test is None else len(test),
        n_pixels,
        scale,
        ", permuted" if permuted else "",
    )
    return DatasetSplits(
        train=train,
        val=val,
        test=test,
        scale=scale,
        pixel_mean=None if stats is None else stats[0],
        pixel_std=None if stats is None else stats[1],
        permutation=permutation,
    )
