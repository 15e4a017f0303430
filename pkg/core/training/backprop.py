"""
Loss gradients and the BPTT entry point shared by every recurrent kind.
"""
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.special import log_softmax, softmax

from core.exceptions import ShapeError
from core.networks import ArchitectureRegistry, ForwardTrace, ParamBundle

Grads = Dict[str, np.ndarray]


class BackpropResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grads: Dict[str, np.ndarray]
    state_grads: np.ndarray  # dLoss/d(probed state), (T + 1, B, p), index 0 = initial state


def softmax_cross_entropy(logits: np.ndarray, labels) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if z.ndim != 2 or z.shape[0] != y.shape[0]:
        raise ShapeError(f"logits {z.shape} do not match {y.shape[0]} labels")
    if y.size and (y.min() < 0 or y.max() >= z.shape[1]):
        raise ShapeError(f"labels outside the {z.shape[1]} logit columns")
    n = z.shape[0]
    rows = np.arange(n)
    loss = -float(log_softmax(z, axis=1)[rows, y].mean())
    dlogits = softmax(z, axis=1)
    dlogits[rows, y] -= 1.0
    return loss, dlogits / n


def draw_truncation_mask(
    trunc_p: float, steps: int, batch_size: int, rng: Optional[np.random.Generator]
) -> np.ndarray:
    """
    (T, B) keep-mask for the nonlinear recurrent edge, one Bernoulli draw per
    step per sequence. p = 0 and p = 1 never touch the generator.
    """
    if not 0.0 <= trunc_p <= 1.0:
        raise ValueError(f"trunc_p must lie in [0, 1], got {trunc_p}")
    if trunc_p == 0.0:
        return np.ones((steps, batch_size))
    if trunc_p == 1.0:
        return np.zeros((steps, batch_size))
    if rng is None:
        raise ValueError("stochastic truncation needs a random generator")
    return (rng.random((steps, batch_size)) >= trunc_p).astype(np.float64)


def bptt_backward(
    trace: ForwardTrace,
    params: ParamBundle,
    loss_grad: np.ndarray,
    trunc_p: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    state_grads: Optional[np.ndarray] = None,
    keep: Optional[np.ndarray] = None,
) -> BackpropResult:
    """
    Exact reverse pass through the unrolled network.

    Args:
        trace: forward trace computed with `params`.
        loss_grad: dLoss/dlogits, (B, c).
        trunc_p: probability of dropping the nonlinear recurrent gradient at a step.
        rng: source of truncation draws; required only when 0 < trunc_p < 1.
        state_grads: extra dLoss/d(probed state) for steps 1..T, (T, B, p).
        keep: a precomputed (T, B) keep-mask; overrides trunc_p and rng.
    """
    arch = ArchitectureRegistry.for_params(params)
    if trace.kind != arch.kind:
        raise ShapeError(f"trace from {trace.kind} does not match {arch.kind} parameters")
    dlogits = np.asarray(loss_grad, dtype=np.float64)
    if dlogits.shape != trace.logits.shape:
        raise ShapeError(f"loss gradient {dlogits.shape} != logits {trace.logits.shape}")
    steps, batch = trace.steps, trace.batch_size
    if keep is None:
        keep = draw_truncation_mask(trunc_p, steps, batch, rng)
    elif keep.shape != (steps, batch):
        raise ShapeError(f"keep mask {keep.shape} != {(steps, batch)}")
    if state_grads is not None and state_grads.shape[:2] != (steps, batch):
        raise ShapeError(f"state gradients {state_grads.shape} do not cover {steps} steps x {batch}")
    grads, probe = arch.backward(trace, params, dlogits, keep, state_grads)
    return BackpropResult(grads=grads, state_grads=probe)


def global_norm(grads: Grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_global_norm(grads: Grads, max_norm: float) -> Tuple[Grads, float]:
    """Rescales every gradient when their joint L2 norm exceeds max_norm; returns (grads, pre-clip norm)."""
    norm = global_norm(grads)
    if not np.isfinite(norm) or norm <= max_norm:
        return grads, norm
    factor = max_norm / norm
    return {name: g * factor for name, g in grads.items()}, norm


def add_grads(total: Optional[Grads], extra: Grads) -> Grads:
    if total is None:
        return {name: g.copy() for name, g in extra.items()}
    for name, g in extra.items():
        total[name] = total[name] + g
    return total
