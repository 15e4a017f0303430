"""
Initialization schemes that turn a fitted LAES (or a seed) into trainable networks.
"""
from typing import Optional

import numpy as np

from core.exceptions import ConfigError, ShapeError
from core.laes import LaesModel, final_states
from core.laes.batch import BatchLike
from core.networks import LinearRnnParams, LmnParams, LstmParams, RnnParams
from core.numerics import least_squares_fit, random_orthogonal

LSTM_FORGET_BIAS = 1.0


def _uniform_fan_in(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(cols)
    return rng.uniform(-bound, bound, size=(rows, cols))


def _check_readout(laes: LaesModel, readout: np.ndarray) -> np.ndarray:
    w_o = np.asarray(readout, dtype=np.float64)
    if w_o.ndim != 2 or w_o.shape[1] != laes.p:
        raise ShapeError(f"readout must be c x {laes.p}, got {w_o.shape}")
    if laes.mean is not None:
        raise ConfigError(
            "a mean-centered LAES cannot initialize a network without an input bias; refit with laes_center=false",
            key="laes_center",
        )
    return w_o


def init_linear_rnn_from_laes(laes: LaesModel, readout: np.ndarray) -> LinearRnnParams:
    w_o = _check_readout(laes, readout)
    return LinearRnnParams(a=laes.a.copy(), b=laes.b.copy(), w_o=w_o.copy())


def init_rnn_from_laes(laes: LaesModel, readout: np.ndarray) -> RnnParams:
    """h_t = tanh(A x_t + B h_{t-1}): V = A, U = B, W_o = readout."""
    w_o = _check_readout(laes, readout)
    return RnnParams(v=laes.a.copy(), u=laes.b.copy(), w_o=w_o.copy())


def init_lmn_from_laes(laes: LaesModel, readout: np.ndarray) -> LmnParams:
    """
    The nonlinearity touches only the input transformation, so the memory runs
    the LAES recurrence exactly: m_t = B m_{t-1} + tanh(A x_t).
    """
    w_o = _check_readout(laes, readout)
    p = laes.p
    return LmnParams(
        w_xh=laes.a.copy(),
        w_mh=np.zeros((p, p)),
        w_hm=np.eye(p),
        w_mm=laes.b.copy(),
        w_o=w_o.copy(),
    )


def _recurrent_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


def init_orthogonal_rnn(p: int, d: int, c: int, seed: int) -> RnnParams:
    rng = np.random.default_rng(seed)
    return RnnParams(
        v=_uniform_fan_in(rng, p, d),
        u=random_orthogonal(p, _recurrent_seed(rng)),
        w_o=_uniform_fan_in(rng, c, p),
    )


def init_orthogonal_lmn(p: int, d: int, c: int, seed: int, hidden: Optional[int] = None) -> LmnParams:
    """Orthogonal W_mm; every other matrix uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    p_h = hidden or p
    rng = np.random.default_rng(seed)
    return LmnParams(
        w_xh=_uniform_fan_in(rng, p_h, d),
        w_mh=_uniform_fan_in(rng, p_h, p),
        w_hm=_uniform_fan_in(rng, p, p_h),
        w_mm=random_orthogonal(p, _recurrent_seed(rng)),
        w_o=_uniform_fan_in(rng, c, p),
    )


def init_random_rnn(p: int, d: int, c: int, seed: int) -> RnnParams:
    """Plain Elman initialization: every matrix uniform fan-in."""
    rng = np.random.default_rng(seed)
    return RnnParams(
        v=_uniform_fan_in(rng, p, d),
        u=_uniform_fan_in(rng, p, p),
        w_o=_uniform_fan_in(rng, c, p),
    )


def init_random_lstm(p: int, d: int, c: int, seed: int) -> LstmParams:
    rng = np.random.default_rng(seed)
    gates = {f"w_{gate}": _uniform_fan_in(rng, p, d + p) for gate in ("input_gate", "forget_gate", "cell", "output_gate")}
    return LstmParams(
        **gates,
        b_input_gate=np.zeros((1, p)),
        b_forget_gate=np.full((1, p), LSTM_FORGET_BIAS),
        b_cell=np.zeros((1, p)),
        b_output_gate=np.zeros((1, p)),
        w_o=_uniform_fan_in(rng, c, p),
    )


def one_hot(labels, n_classes: Optional[int] = None) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.size == 0:
        raise ValueError("degenerate label set: no labels")
    if np.any(y < 0):
        raise ValueError("degenerate label set: negative class ids")
    c = n_classes if n_classes is not None else int(y.max()) + 1
    if y.max() >= c:
        raise ValueError(f"label {int(y.max())} outside {c} classes")
    out = np.zeros((y.size, c))
    out[np.arange(y.size), y] = 1.0
    return out


def fit_linear_head(
    states: np.ndarray,
    labels,
    ridge: float = 1e-6,
    n_classes: Optional[int] = None,
) -> np.ndarray:
    """Least-squares readout from final states to one-hot targets; returns W_o (c x p)."""
    x = np.asarray(states, dtype=np.float64)
    targets = one_hot(labels, n_classes)
    if x.shape[0] != targets.shape[0]:
        raise ShapeError(f"{x.shape[0]} states but {targets.shape[0]} labels")
    return least_squares_fit(x, targets, ridge).T


def laes_readout(
    laes: LaesModel,
    batch: BatchLike,
    labels,
    ridge: float = 1e-6,
    n_classes: Optional[int] = None,
) -> np.ndarray:
    """Linear head trained on the LAES encodings of `batch`."""
    return fit_linear_head(final_states(laes, batch), labels, ridge, n_classes)
