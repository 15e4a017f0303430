import logging
from typing import Iterable, List, Sequence, Union

import numpy as np

from core.exceptions import ShapeError
from core.laes import LaesModel, encode_batch
from core.laes.batch import BatchLike, as_batch
from core.models import LagProbeResult
from core.networks import ArchitectureRegistry, ParamBundle
from core.numerics import least_squares_fit

logger = logging.getLogger(__name__)

PROBE_HOLDOUT = 0.2


def collect_states(model: Union[LaesModel, ParamBundle], batch: BatchLike) -> List[np.ndarray]:
    """Per-sequence (T_i, p) trajectories of the state a readout would see."""
    data = as_batch(batch)
    if isinstance(model, LaesModel):
        states = encode_batch(model, data)
    else:
        trace = ArchitectureRegistry.for_params(model).forward(model, data)
        states = np.transpose(trace.probed_states(), (1, 0, 2))
    return [states[i, : data.lengths[i]] for i in range(data.n)]


def _as_list(items) -> List[np.ndarray]:
    out = []
    for item in items:
        arr = np.asarray(item, dtype=np.float64)
        out.append(arr[:, None] if arr.ndim == 1 else arr)
    return out


def _lag_pairs(states: List[np.ndarray], inputs: List[np.ndarray], indices, k: int):
    xs = [states[i][k:] for i in indices]
    ys = [inputs[i][:-k] for i in indices]
    return np.vstack(xs), np.vstack(ys)


def lag_reconstruction_probe(
    states_per_seq: Sequence,
    inputs_per_seq: Sequence,
    lags: Iterable[int],
    ridge: float = 1e-6,
    model_tag: str = "",
    holdout: float = PROBE_HOLDOUT,
    seed: int = 0,
) -> List[LagProbeResult]:
    """
    For each lag k, fits a separate linear map (with intercept) from h_t to
    x_{t-k} over every valid (sequence, t) and reports the mean squared error
    on held-out sequences. With fewer than two sequences, or when the holdout
    would be empty, the error is measured in-sample.
    """
    states = _as_list(states_per_seq)
    inputs = _as_list(inputs_per_seq)
    if len(states) != len(inputs) or not states:
        raise ShapeError(f"{len(states)} state trajectories for {len(inputs)} input sequences")
    for s, x in zip(states, inputs):
        if s.shape[0] != x.shape[0]:
            raise ShapeError(f"trajectory of {s.shape[0]} steps for a sequence of {x.shape[0]}")
    min_len = min(x.shape[0] for x in inputs)
    lag_list = sorted(set(int(k) for k in lags))
    for k in lag_list:
        if k < 1 or k >= min_len:
            raise ValueError(f"lag {k} must lie in [1, {min_len - 1}] (shortest sequence has {min_len} steps)")

    n = len(states)
    order = np.random.default_rng(seed).permutation(n)
    n_test = int(round(holdout * n))
    if n_test == 0 or n_test == n:
        fit_idx = test_idx = order
    else:
        test_idx, fit_idx = order[:n_test], order[n_test:]

    results = []
    for k in lag_list:
        x_fit, y_fit = _lag_pairs(states, inputs, fit_idx, k)
        x_test, y_test = _lag_pairs(states, inputs, test_idx, k)
        w = least_squares_fit(np.hstack([x_fit, np.ones((x_fit.shape[0], 1))]), y_fit, ridge)
        pred = np.hstack([x_test, np.ones((x_test.shape[0], 1))]) @ w
        mse = float(np.mean(np.square(pred - y_test)))
        results.append(LagProbeResult(k=k, mse=mse, model_tag=model_tag))
        logger.debug("lag %d probe mse %.6g (%s)", k, mse, model_tag)
    return results
