from typing import Iterable, List, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from core.exceptions import ShapeError


class SequenceBatch(BaseModel):
    """
    A ragged batch of vector sequences stored zero-padded.

    inputs has shape (N, T_max, d); sequence i occupies inputs[i, :lengths[i]].
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    inputs: np.ndarray
    lengths: np.ndarray

    @model_validator(mode="after")
    def _validate(self) -> "SequenceBatch":
        if self.inputs.ndim != 3:
            raise ShapeError(f"inputs must be (N, T, d), got {self.inputs.shape}")
        n, t_max, _ = self.inputs.shape
        if n == 0:
            raise ValueError("empty batch")
        if self.lengths.shape != (n,):
            raise ShapeError(f"lengths shape {self.lengths.shape} does not match {n} sequences")
        if np.any(self.lengths < 1) or np.any(self.lengths > t_max):
            raise ShapeError(f"sequence lengths must lie in [1, {t_max}]")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("batch contains non-finite values")
        return self

    @classmethod
    def from_sequences(cls, sequences: Iterable) -> "SequenceBatch":
        seqs: List[np.ndarray] = []
        for seq in sequences:
            arr = np.asarray(seq, dtype=np.float64)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.ndim != 2 or arr.shape[0] == 0:
                raise ShapeError(f"each sequence must be a non-empty (T, d) matrix, got {arr.shape}")
            seqs.append(arr)
        if not seqs:
            raise ValueError("empty batch")
        dims = {s.shape[1] for s in seqs}
        if len(dims) != 1:
            raise ShapeError(f"inconsistent feature dims across sequences: {sorted(dims)}")
        lengths = np.array([s.shape[0] for s in seqs], dtype=np.int64)
        inputs = np.zeros((len(seqs), int(lengths.max()), dims.pop()))
        for i, s in enumerate(seqs):
            inputs[i, : s.shape[0]] = s
        return cls(inputs=inputs, lengths=lengths)

    @classmethod
    def from_array(cls, inputs: np.ndarray) -> "SequenceBatch":
        """Equal-length batch from an (N, T, d) array."""
        arr = np.asarray(inputs, dtype=np.float64)
        return cls(inputs=arr, lengths=np.full(arr.shape[0], arr.shape[1], dtype=np.int64))

    @property
    def n(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def t_max(self) -> int:
        return int(self.inputs.shape[1])

    @property
    def d(self) -> int:
        return int(self.inputs.shape[2])

    def __len__(self) -> int:
        return self.n

    def sequence(self, i: int) -> np.ndarray:
        return self.inputs[i, : self.lengths[i]]

    def sequences(self) -> List[np.ndarray]:
        return [self.sequence(i) for i in range(self.n)]

    def active_mask(self) -> np.ndarray:
        """(T_max, N) float mask, 1 where timestep t belongs to sequence n."""
        steps = np.arange(self.t_max)[:, None]
        return (steps < self.lengths[None, :]).astype(np.float64)

    def subset(self, indices: Sequence[int]) -> "SequenceBatch":
        idx = np.asarray(indices, dtype=np.int64)
        lengths = self.lengths[idx]
        t_max = int(lengths.max()) if idx.size else 1
        return SequenceBatch(inputs=self.inputs[idx, :t_max], lengths=lengths)

    def scaled(self, factor: float) -> "SequenceBatch":
        return SequenceBatch(inputs=self.inputs * factor, lengths=self.lengths.copy())

    def feature_mean(self) -> np.ndarray:
        """Mean input vector over every valid timestep, shape (1, d)."""
        mask = self.active_mask().T[:, :, None]
        return (self.inputs * mask).sum(axis=(0, 1))[None, :] / float(self.lengths.sum())


BatchLike = Union[SequenceBatch, np.ndarray, Sequence]


def as_batch(data: BatchLike) -> SequenceBatch:
    """Accepts a SequenceBatch, a single (T, d) sequence, an (N, T, d) array or a list of sequences."""
    if isinstance(data, SequenceBatch):
        return data
    if isinstance(data, np.ndarray):
        if data.ndim in (1, 2):
            return SequenceBatch.from_sequences([data])
        if data.ndim == 3:
            return SequenceBatch.from_array(data)
        raise ShapeError(f"cannot interpret array of shape {data.shape} as sequences")
    return SequenceBatch.from_sequences(data)
