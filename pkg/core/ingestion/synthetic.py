import numpy as np

from core.ingestion.sequences import DatasetSplits, LabeledSequences
from core.laes.batch import SequenceBatch


def synthetic_copy_task(
    n: int,
    t: int,
    d: int,
    seed: int,
    margin: float = 0.0,
    scale: float = 1.0,
) -> LabeledSequences:
    """
    n Gaussian sequences of length t; the label is 1 when the first coordinate
    of the first input is positive, else 0. A positive `margin` pushes that
    coordinate away from zero so the classes are separated by at least
    2 * margin * scale.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, t, d))
    if margin > 0:
        first = x[:, 0, 0]
        x[:, 0, 0] = np.where(first >= 0, 1.0, -1.0) * (margin + np.abs(first))
    labels = (x[:, 0, 0] > 0).astype(np.int64)
    return LabeledSequences(batch=SequenceBatch.from_array(x * scale), labels=labels, n_classes=2)


def synthetic_splits(
    n: int,
    test_n: int,
    t: int,
    d: int,
    seed: int,
    margin: float = 0.0,
    scale: float = 1.0,
) -> DatasetSplits:
    """Independent draws for train (seed), val (seed + 1) and test (seed + 2)."""
    return DatasetSplits(
        train=synthetic_copy_task(n, t, d, seed, margin, scale),
        val=synthetic_copy_task(test_n, t, d, seed + 1, margin, scale),
        test=synthetic_copy_task(test_n, t, d, seed + 2, margin, scale),
    )
