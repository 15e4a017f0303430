"""
Gradient propagation through time: how much of an error signal injected at
the last step survives at every earlier step of the probed state.
"""
import logging
from typing import List, Optional

import numpy as np
from scipy.special import softmax

from core.laes.batch import BatchLike, as_batch
from core.models import GradientPoint
from core.networks import ArchitectureRegistry, ParamBundle
from core.training.backprop import bptt_backward

logger = logging.getLogger(__name__)


def gradient_through_time(
    params: ParamBundle,
    model_kind: str,
    batch: BatchLike,
    trunc_p: float = 0.0,
    seed: int = 0,
    labels=None,
) -> List[GradientPoint]:
    """
    Injects the per-sequence cross-entropy gradient at the final step only,
    rescaled so that dE/d(state_T) has unit norm for every sequence, and
    backpropagates it to t = 0.

    Returns one point per t from T down to 0 holding ||dE/d(state_t)||_2
    averaged over the batch. The probed state is m for LMN and linear RNN,
    h for RNN and LSTM. `labels` default to class 0.
    """
    arch = ArchitectureRegistry.get(model_kind)
    data = as_batch(batch)
    trace = arch.forward(params, data)
    n, c = trace.logits.shape
    y = np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)

    dlogits = softmax(trace.logits, axis=1)
    dlogits[np.arange(n), y] -= 1.0
    top = np.linalg.norm(dlogits @ params.w_o, axis=1)
    scale = np.where(top > 0, 1.0 / np.where(top > 0, top, 1.0), 0.0)
    dlogits = dlogits * scale[:, None]

    rng: Optional[np.random.Generator] = np.random.default_rng(seed)
    result = bptt_backward(trace, params, dlogits, trunc_p=trunc_p, rng=rng)
    norms = np.linalg.norm(result.state_grads, axis=2).mean(axis=1)
    if not np.all(np.isfinite(norms)):
        logger.warning("⚠️ Gradient curve for %s contains non-finite norms (explosion)", model_kind)
    steps = trace.steps
    return [GradientPoint(t=t, grad_norm=float(norms[t])) for t in range(steps, -1, -1)]
