import numpy as np

from core.laes.batch import BatchLike
from core.networks.architectures import ForwardTrace, RecurrentArchitecture
from core.networks.params import (
    LinearRnnParams,
    LmnParams,
    LstmParams,
    ParamBundle,
    RnnParams,
)
from core.networks.registry import ArchitectureRegistry


def linear_rnn_forward(params: LinearRnnParams, seq: BatchLike) -> ForwardTrace:
    return ArchitectureRegistry.get("linear_rnn").forward(params, seq)


def rnn_forward(params: RnnParams, seq: BatchLike) -> ForwardTrace:
    return ArchitectureRegistry.get("rnn").forward(params, seq)


def lmn_forward(params: LmnParams, seq: BatchLike) -> ForwardTrace:
    return ArchitectureRegistry.get("lmn").forward(params, seq)


def lstm_forward(params: LstmParams, seq: BatchLike) -> ForwardTrace:
    return ArchitectureRegistry.get("lstm").forward(params, seq)


def forward(params: ParamBundle, seq: BatchLike) -> ForwardTrace:
    return ArchitectureRegistry.for_params(params).forward(params, seq)


def rnn_to_lmn(rnn: RnnParams) -> LmnParams:
    """
    LMN whose memory reproduces the RNN's hidden state at every step:
    W_xh = V, W_mh = U, W_hm = I, W_mm = 0, readout copied.
    """
    p = rnn.state_size
    return LmnParams(
        w_xh=rnn.v.copy(),
        w_mh=rnn.u.copy(),
        w_hm=np.eye(p),
        w_mm=np.zeros((p, p)),
        w_o=rnn.w_o.copy(),
    )


__all__ = [
    "ArchitectureRegistry",
    "ForwardTrace",
    "LinearRnnParams",
    "LmnParams",
    "LstmParams",
    "ParamBundle",
    "RecurrentArchitecture",
    "RnnParams",
    "forward",
    "linear_rnn_forward",
    "lmn_forward",
    "lstm_forward",
    "rnn_forward",
    "rnn_to_lmn",
]
