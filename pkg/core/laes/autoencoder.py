"""
Linear Autoencoder for Sequences (LAES).

Encoder:  m_t = A x_t + B m_{t-1},  m_0 = 0
Decoder:  [x~_t; m~_{t-1}] = C m_t  with  C = [A^T; B^T]

The optimal encoder comes in closed form from the truncated SVD of the prefix
matrix Xi, whose rows are reversed, zero-padded input prefixes
[x_t, x_{t-1}, ..., x_1, 0, ...]. With Xi ~= V S U^T:

    A = U^T P        (P selects the first block of d columns)
    B = U^T R U      (R shifts every block down by d columns)
"""
import logging
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from core.exceptions import ShapeError
from core.laes.batch import BatchLike, SequenceBatch, as_batch
from core.numerics import SvdResult, complete_basis, total_energy, truncated_svd

logger = logging.getLogger(__name__)


class LaesModel(BaseModel):
    """Fitted encoder. The decoder is always derived from (a, b), never stored."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    a: np.ndarray
    b: np.ndarray
    mean: Optional[np.ndarray] = None

    @model_validator(mode="after")
    def _validate(self) -> "LaesModel":
        if self.a.ndim != 2 or self.b.ndim != 2:
            raise ShapeError("LAES matrices must be 2-D")
        p, d = self.a.shape
        if self.b.shape != (p, p):
            raise ShapeError(f"B must be {p}x{p}, got {self.b.shape}")
        if self.mean is not None and self.mean.shape != (1, d):
            raise ShapeError(f"mean must be 1x{d}, got {self.mean.shape}")
        for name, arr in (("a", self.a), ("b", self.b), ("mean", self.mean)):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ValueError(f"LAES {name} has non-finite entries")
        return self

    @property
    def p(self) -> int:
        return int(self.a.shape[0])

    @property
    def d(self) -> int:
        return int(self.a.shape[1])

    def decoder(self) -> np.ndarray:
        """C = [A^T; B^T], shape (d + p) x p."""
        return np.vstack([self.a.T, self.b.T])

    def _centered(self, x: np.ndarray) -> np.ndarray:
        return x - self.mean if self.mean is not None else x


class LaesFit(BaseModel):
    """A fitted model together with what the fit saw, for reporting."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    model: LaesModel
    svd: SvdResult
    prefix_shape: Tuple[int, int]
    total_energy: float

    @property
    def retained_energy(self) -> float:
        return float(np.sum(np.square(self.svd.s)))

    @property
    def tail_energy(self) -> float:
        return max(self.total_energy - self.retained_energy, 0.0)


def _prefix_ends(length: int, stride: int) -> List[int]:
    ends = list(range(stride, length + 1, stride))
    if not ends or ends[-1] != length:
        ends.append(length)
    return ends


def build_prefix_matrix(
    batch: BatchLike,
    prefix_stride: int = 1,
    max_prefixes: Optional[int] = None,
    seed: int = 0,
) -> np.ndarray:
    """
    Prefix matrix Xi with one row per selected prefix end t of every sequence.

    Row layout is [x_t, x_{t-1}, ..., x_1] zero-padded on the right to T_max * d
    columns. Prefix ends are every `prefix_stride`-th step plus the final step;
    when more than `max_prefixes` rows result, a seeded uniform subsample (kept
    in original order) is returned.
    """
    batch = as_batch(batch)
    if prefix_stride < 1:
        raise ValueError(f"prefix_stride must be >= 1, got {prefix_stride}")

    rows = [
        (i, t)
        for i, length in enumerate(batch.lengths)
        for t in _prefix_ends(int(length), prefix_stride)
    ]
    if max_prefixes is not None and len(rows) > max_prefixes:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(rows), size=max_prefixes, replace=False))
        rows = [rows[k] for k in keep]

    d = batch.d
    xi = np.zeros((len(rows), batch.t_max * d))
    for r, (i, t) in enumerate(rows):
        xi[r, : t * d] = batch.inputs[i, t - 1 :: -1].ravel()
    return xi


def fit_laes_detailed(
    batch: BatchLike,
    p: int,
    prefix_stride: int = 1,
    max_prefixes: Optional[int] = None,
    seed: int = 0,
    center: bool = False,
    solver: str = "auto",
    max_sequences: Optional[int] = None,
) -> LaesFit:
    """Closed-form LAES fit; see fit_laes. Also returns the SVD and prefix-matrix statistics."""
    batch = as_batch(batch)
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")

    if max_sequences is not None and batch.n > max_sequences:
        rng = np.random.default_rng(seed)
        batch = batch.subset(np.sort(rng.choice(batch.n, size=max_sequences, replace=False)))
        logger.info("LAES fit on a subsample of %d sequences", max_sequences)

    mean = batch.feature_mean() if center else None
    if mean is not None:
        mask = batch.active_mask().T[:, :, None]
        batch = SequenceBatch(inputs=(batch.inputs - mean) * mask, lengths=batch.lengths)

    xi = build_prefix_matrix(batch, prefix_stride, max_prefixes, seed)
    n_rows, n_cols = xi.shape
    if p > n_cols:
        raise ValueError(f"p={p} exceeds the prefix-matrix column count {n_cols}")

    energy = total_energy(xi)
    k = min(p, n_rows)
    svd = truncated_svd(xi, k, solver=solver)
    u = svd.u
    if k < p:
        # fewer prefixes than memory units: pad with directions the data never uses
        u = complete_basis(u, p - k, seed=seed)

    d = batch.d
    a = u[:d].T.copy()
    b = u[d:].T @ u[:-d]
    model = LaesModel(a=a, b=b, mean=mean)

    fit = LaesFit(model=model, svd=svd, prefix_shape=(n_rows, n_cols), total_energy=energy)
    logger.info(
        "LAES fit: Xi %dx%d, p=%d, solver=%s, retained energy %.6g of %.6g",
        n_rows, n_cols, p, svd.solver, fit.retained_energy, energy,
    )
    return fit


def fit_laes(
    batch: BatchLike,
    p: int,
    prefix_stride: int = 1,
    max_prefixes: Optional[int] = None,
    seed: int = 0,
    center: bool = False,
    solver: str = "auto",
    max_sequences: Optional[int] = None,
) -> LaesModel:
    """
    Optimal linear autoencoder for `batch` with memory size `p`.

    Raises:
        ValueError: p exceeds the prefix-matrix column count T_max * d.
    """
    return fit_laes_detailed(
        batch, p, prefix_stride, max_prefixes, seed, center, solver, max_sequences
    ).model


def _check_dim(model: LaesModel, d: int) -> None:
    if d != model.d:
        raise ShapeError(f"sequence feature dim {d} does not match LAES input size {model.d}")


def encode_batch(model: LaesModel, batch: BatchLike) -> np.ndarray:
    """States for every sequence and step, shape (N, T_max, p). States freeze after a sequence ends."""
    batch = as_batch(batch)
    _check_dim(model, batch.d)
    active = batch.active_mask()
    x = model._centered(batch.inputs)
    states = np.zeros((batch.n, batch.t_max, model.p))
    m = np.zeros((batch.n, model.p))
    for t in range(batch.t_max):
        new = x[:, t] @ model.a.T + m @ model.b.T
        live = active[t][:, None]
        m = live * new + (1.0 - live) * m
        states[:, t] = m
    return states


def final_states(model: LaesModel, batch: BatchLike) -> np.ndarray:
    """Encoding of each whole sequence, shape (N, p)."""
    return encode_batch(model, batch)[:, -1]


def laes_encode(model: LaesModel, seq) -> np.ndarray:
    """States m_1 .. m_T of a single (T, d) sequence."""
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ShapeError(f"expected a (T, d) sequence, got {arr.shape}")
    return encode_batch(model, SequenceBatch.from_sequences([arr]))[0]


def laes_decode_unroll(model: LaesModel, m, steps: int) -> np.ndarray:
    """
    Unrolls the decoder from state `m` for `steps` steps.
    Row k estimates x_{t-k} for the step t that produced `m`.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    state = np.asarray(m, dtype=np.float64).reshape(-1)
    if state.shape[0] != model.p:
        raise ShapeError(f"state has size {state.shape[0]}, LAES memory is {model.p}")
    out = np.empty((steps, model.d))
    for k in range(steps):
        out[k] = model.a.T @ state
        state = model.b.T @ state
    if model.mean is not None:
        out += model.mean
    return out


def stm_error(
    encode_states: Callable[[np.ndarray], np.ndarray],
    decode_fn: Callable[[np.ndarray, int], np.ndarray],
    seq,
) -> float:
    """
    Short-term memory error E(x) = sum_k ||dec^k(h_T) - x_{T-k}||^2 over every lag
    k = 0 .. T-1, decoding from the final state.
    """
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    states = encode_states(arr)
    recon = decode_fn(states[-1], arr.shape[0])
    return float(np.sum(np.square(recon - arr[::-1])))
