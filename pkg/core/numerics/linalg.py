"""
Dense linear-algebra kernels: truncated SVD, seeded orthogonal matrices and
ridge / minimum-norm least squares. Everything runs in float64.

SVD convention follows the prefix-matrix literature: for an N x D matrix M,
M ~= V diag(s) U^T with U (D x k) and V (N x k).
"""
import logging
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import linalg as sla

from core.exceptions import ShapeError

logger = logging.getLogger(__name__)

SvdSolver = Literal["auto", "lapack", "gram", "randomized"]

# LAPACK on the full matrix below this many entries, Gram eigendecomposition
# while the smaller side stays below GRAM_MAX_DIM, randomized projection beyond.
EXACT_MAX_ELEMENTS = 4_000_000
GRAM_MAX_DIM = 2000
RANDOMIZED_SEED = 20200
RANDOMIZED_OVERSAMPLE = 10
RANDOMIZED_POWER_ITERS = 4
ROW_BLOCK = 65536


class SvdResult(BaseModel):
    """Top-k singular triplets of an N x D matrix, M ~= v @ diag(s) @ u.T."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    solver: str = "lapack"

    @model_validator(mode="after")
    def _check_shapes(self) -> "SvdResult":
        k = self.s.shape[0]
        if self.u.ndim != 2 or self.v.ndim != 2 or self.u.shape[1] != k or self.v.shape[1] != k:
            raise ShapeError(
                f"inconsistent SVD factors: u{self.u.shape} s{self.s.shape} v{self.v.shape}"
            )
        return self

    @property
    def k(self) -> int:
        return int(self.s.shape[0])

    def reconstruct(self) -> np.ndarray:
        return (self.v * self.s) @ self.u.T


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Returns `m` as a finite 2-D float64 array or raises."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def total_energy(m: np.ndarray) -> float:
    """Squared Frobenius norm."""
    return float(np.sum(np.square(m)))


def tail_energy(svd: SvdResult, total: float) -> float:
    """Energy left out of a truncated SVD, i.e. the sum of the discarded sigma_i^2."""
    return max(total - float(np.sum(np.square(svd.s))), 0.0)


def _fix_signs(u: np.ndarray, v: np.ndarray) -> None:
    # largest-magnitude entry of each u column made positive
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    u *= signs
    v *= signs


def complete_basis(basis: np.ndarray, n_missing: int, seed: int) -> np.ndarray:
    """Appends `n_missing` orthonormal columns orthogonal to `basis` (N x r)."""
    rows = basis.shape[0]
    rng = np.random.default_rng(seed)
    filler = rng.standard_normal((rows, n_missing))
    q, _ = sla.qr(np.hstack([basis, filler]), mode="economic")
    extra = q[:, basis.shape[1]:]
    return np.hstack([basis, extra])


def _blocked_matmul(m: np.ndarray, right: np.ndarray) -> np.ndarray:
    out = np.empty((m.shape[0], right.shape[1]))
    for start in range(0, m.shape[0], ROW_BLOCK):
        stop = start + ROW_BLOCK
        out[start:stop] = m[start:stop] @ right
    return out


def _blocked_gram(m: np.ndarray) -> np.ndarray:
    gram = np.zeros((m.shape[1], m.shape[1]))
    for start in range(0, m.shape[0], ROW_BLOCK):
        block = m[start:start + ROW_BLOCK]
        gram += block.T @ block
    return gram


def _svd_lapack(m: np.ndarray, k: int):
    try:
        left, s, right_t = sla.svd(m, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        logger.warning("gesdd did not converge, retrying with gesvd")
        left, s, right_t = sla.svd(m, full_matrices=False, lapack_driver="gesvd")
    return right_t[:k].T.copy(), s[:k].copy(), left[:, :k].copy()


def _svd_gram(m: np.ndarray, k: int):
    n_rows, n_cols = m.shape
    tall = n_cols <= n_rows
    gram = _blocked_gram(m) if tall else m @ m.T
    dim = gram.shape[0]
    evals, evecs = sla.eigh(gram, subset_by_index=[dim - k, dim - 1])
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    s = np.sqrt(evals)

    # squaring loses half the digits, so the cutoff is sqrt(eps)-relative
    tol = np.sqrt(max(m.shape) * np.finfo(np.float64).eps) * (s[0] if s.size else 0.0)
    positive = s > tol
    n_pos = int(np.count_nonzero(positive))
    # the other side of the factorization, defined only for non-zero sigma
    if tall:
        u = evecs
        other = _blocked_matmul(m, u[:, :n_pos]) / s[:n_pos]
    else:
        v_side = evecs
        other = (m.T @ v_side[:, :n_pos]) / s[:n_pos]
    if n_pos < k:
        other = complete_basis(other, k - n_pos, seed=RANDOMIZED_SEED)
        s[n_pos:] = 0.0
    if tall:
        return u, s, other
    return other, s, v_side


def _svd_randomized(m: np.ndarray, k: int, seed: int):
    rng = np.random.default_rng(seed)
    width = min(k + RANDOMIZED_OVERSAMPLE, min(m.shape))
    omega = rng.standard_normal((m.shape[1], width))
    q, _ = sla.qr(_blocked_matmul(m, omega), mode="economic")
    for _ in range(RANDOMIZED_POWER_ITERS):
        z, _ = sla.qr(m.T @ q, mode="economic")
        q, _ = sla.qr(_blocked_matmul(m, z), mode="economic")
    small = q.T @ m
    left, s, right_t = sla.svd(small, full_matrices=False)
    v = q @ left[:, :k]
    return right_t[:k].T.copy(), s[:k].copy(), v


def _pick_solver(shape) -> str:
    n_rows, n_cols = shape
    if n_rows * n_cols <= EXACT_MAX_ELEMENTS:
        return "lapack"
    if min(n_rows, n_cols) <= GRAM_MAX_DIM:
        return "gram"
    return "randomized"


def truncated_svd(
    m,
    k: int,
    solver: SvdSolver = "auto",
    seed: int = RANDOMIZED_SEED,
) -> SvdResult:
    """
    Top-k singular triplets of `m` (N x D).

    The result is deterministic for a given matrix and k: the randomized solver
    uses a fixed seed and every solver applies the same sign convention (largest
    magnitude entry of each u column is positive).

    Raises:
        ValueError: k outside [1, min(N, D)] or non-finite entries.
    """
    arr = as_matrix(m, "svd input")
    limit = min(arr.shape)
    if not 1 <= k <= limit:
        raise ValueError(f"k={k} out of range [1, {limit}] for matrix {arr.shape}")

    chosen = _pick_solver(arr.shape) if solver == "auto" else solver
    if chosen == "lapack":
        u, s, v = _svd_lapack(arr, k)
    elif chosen == "gram":
        u, s, v = _svd_gram(arr, k)
    elif chosen == "randomized":
        u, s, v = _svd_randomized(arr, k, seed)
    else:
        raise ValueError(f"unknown SVD solver {solver!r}")

    _fix_signs(u, v)
    logger.debug("truncated_svd %s k=%d solver=%s s0=%.6g", arr.shape, k, chosen, s[0])
    return SvdResult(u=u, s=s, v=v, solver=chosen)


def random_orthogonal(n: int, seed: int) -> np.ndarray:
    """
    Seeded n x n orthogonal matrix: QR of a standard-normal matrix with the
    columns sign-fixed so that R has a positive diagonal.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    q, r = sla.qr(rng.standard_normal((n, n)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def least_squares_fit(inputs, targets, ridge: float = 0.0, rcond: Optional[float] = None) -> np.ndarray:
    """
    argmin_W ||inputs @ W - targets||^2 + ridge * ||W||^2.

    With ridge == 0 this is the minimum-norm (pseudoinverse) solution, so
    rank-deficient inputs are fine.

    Returns:
        W with shape (d, c).
    """
    x = as_matrix(inputs, "inputs")
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"inputs have {x.shape[0]} rows but targets have {y.shape[0]}")
    if x.shape[0] < 1:
        raise ValueError("least squares needs at least one row")
    if ridge < 0:
        raise ValueError(f"ridge must be >= 0, got {ridge}")

    if ridge == 0:
        w, *_ = sla.lstsq(x, y, cond=rcond, lapack_driver="gelsd")
        return w

    left, s, right_t = sla.svd(x, full_matrices=False)
    shrink = s / (s * s + ridge)
    return (right_t.T * shrink) @ (left.T @ y)
