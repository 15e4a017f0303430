"""
Regularizers added to the classification loss: a soft orthogonality
constraint on recurrent matrices and an activation penalty on the probed
state. Both return exact gradients.
"""
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from core.networks import ArchitectureRegistry, ForwardTrace, ParamBundle


class PenaltyResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    loss: float
    grads: Dict[str, np.ndarray]
    state_grads: Optional[np.ndarray] = None  # (T, B, p) for steps 1..T


def orthogonality_penalty(w: np.ndarray, lam: float) -> Tuple[float, np.ndarray]:
    """lam * ||W^T W - I||_F^2 and its gradient 4 lam W (W^T W - I)."""
    gap = w.T @ w - np.eye(w.shape[1])
    return lam * float(np.sum(gap * gap)), 4.0 * lam * (w @ gap)


def _l2_activation(states: np.ndarray, active: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-sequence sum_t ||s_t||^2 over live steps, and its state gradient."""
    live = active[:, :, None]
    per_seq = np.sum(states * states * live, axis=(0, 2))
    return per_seq, 2.0 * states * live


def _norm_stabilizer(states: np.ndarray, active: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-sequence sum_t (||s_t|| - ||s_{t-1}||)^2 with ||s_0|| = 0, and its state gradient."""
    norms = np.linalg.norm(states, axis=2)
    prev = np.vstack([np.zeros((1, norms.shape[1])), norms[:-1]])
    diff = (norms - prev) * active
    per_seq = np.sum(diff * diff, axis=0)

    nxt = np.vstack([diff[1:], np.zeros((1, diff.shape[1]))])
    coef = 2.0 * (diff - nxt)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(norms[:, :, None] > 0, states / norms[:, :, None], 0.0)
    return per_seq, coef[:, :, None] * unit


_ACTIVATION_REGULARIZERS = {
    "l2": _l2_activation,
    "norm_stabilizer": _norm_stabilizer,
}


def activation_penalty(
    trace: ForwardTrace, alpha: float, act_reg: str = "l2"
) -> Tuple[float, np.ndarray]:
    """
    alpha * (1 / T_i) * sum_t r(s_t) per sequence, averaged over the batch.
    Returns (loss, dLoss/d(probed state) for steps 1..T).
    """
    try:
        term = _ACTIVATION_REGULARIZERS[act_reg]
    except KeyError:
        raise ValueError(f"unknown activation regularizer {act_reg!r}") from None
    states = trace.probed_states()
    if alpha == 0.0:
        return 0.0, np.zeros_like(states)
    per_seq, grad = term(states, trace.active)
    weights = alpha / (trace.lengths.astype(np.float64) * trace.batch_size)
    return float(np.sum(per_seq * weights)), grad * weights[None, :, None]


def penalty_terms(
    params: ParamBundle,
    lambda_ortho: float,
    alpha_act: float,
    trace: Optional[ForwardTrace] = None,
    act_reg: str = "l2",
) -> PenaltyResult:
    """
    Orthogonality on each recurrent matrix of the architecture plus the
    activation term on `trace` (skipped when no trace is given).
    """
    grads = {name: np.zeros_like(arr) for name, arr in params.tensors().items()}
    loss = 0.0
    if lambda_ortho > 0.0:
        for name in ArchitectureRegistry.for_params(params).recurrent_matrices:
            value, grad = orthogonality_penalty(getattr(params, name), lambda_ortho)
            loss += value
            grads[name] = grads[name] + grad

    state_grads = None
    if trace is not None:
        act_loss, state_grads = activation_penalty(trace, alpha_act, act_reg)
        loss += act_loss
    return PenaltyResult(loss=loss, grads=grads, state_grads=state_grads)
