from core.laes.autoencoder import (
    LaesFit,
    LaesModel,
    build_prefix_matrix,
    encode_batch,
    final_states,
    fit_laes,
    fit_laes_detailed,
    laes_decode_unroll,
    laes_encode,
    stm_error,
)
from core.laes.batch import SequenceBatch, as_batch

__all__ = [
    "LaesFit",
    "LaesModel",
    "SequenceBatch",
    "as_batch",
    "build_prefix_matrix",
    "encode_batch",
    "final_states",
    "fit_laes",
    "fit_laes_detailed",
    "laes_decode_unroll",
    "laes_encode",
    "stm_error",
]
