"""
Sequence reconstruction with a shared-cell encoder/decoder.

The encoder reads x_1..x_T; the same cell then runs T more steps on zero
inputs and a linear output layer W_o (d x p) emits the input stream in
reverse: output step j estimates x_{T+1-j}. Training minimizes the mean
squared reconstruction error; the closed-form LAES is the reference.
"""
import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import ShapeError
from core.ingestion.sequences import DatasetSplits, LabeledSequences
from core.laes import LaesModel, final_states, laes_decode_unroll, laes_encode
from core.laes.batch import BatchLike, SequenceBatch, as_batch
from core.models import TrainConfig, TrainHistory
from core.networks import ArchitectureRegistry, ParamBundle
from core.training.backprop import Grads, bptt_backward
from core.training.penalties import penalty_terms
from core.training.trainer import Trainer

logger = logging.getLogger(__name__)


def _equal_length(batch: SequenceBatch) -> int:
    if np.any(batch.lengths != batch.t_max):
        raise ShapeError("reconstruction needs equal-length sequences")
    return batch.t_max


def autoencoder_inputs(batch: SequenceBatch) -> SequenceBatch:
    """[x_1..x_T, 0..0]: the encoder pass followed by T zero-input decoder steps."""
    _equal_length(batch)
    return SequenceBatch.from_array(np.concatenate([batch.inputs, np.zeros_like(batch.inputs)], axis=1))


def _decoder_states(params: ParamBundle, batch: SequenceBatch):
    steps = _equal_length(batch)
    trace = ArchitectureRegistry.for_params(params).forward(params, autoencoder_inputs(batch))
    return trace, trace.probed_states()[steps:]


def reconstruct_batch(params: ParamBundle, batch: BatchLike) -> np.ndarray:
    """(N, T, d) outputs in emission order, so row j of sequence i estimates x_{T-j}."""
    _, dec = _decoder_states(params, as_batch(batch))
    return np.transpose(dec @ params.w_o.T, (1, 0, 2))


def autoencoder_reconstruct(params: ParamBundle, kind: str, seq) -> np.ndarray:
    """Encodes one (T, d) sequence, then decodes T steps from zero inputs; returns (T, d) in emission order."""
    if params.KIND != kind:
        raise ShapeError(f"{kind} reconstruction given {params.KIND} parameters")
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return reconstruct_batch(params, SequenceBatch.from_sequences([arr]))[0]


def reconstruction_mae(params: ParamBundle, batch: BatchLike, chunk: int = 1024) -> float:
    """Mean absolute error between the reversed outputs and the inputs."""
    data = as_batch(batch)
    total = 0.0
    for start in range(0, data.n, chunk):
        part = data.subset(range(start, min(start + chunk, data.n)))
        recon = reconstruct_batch(params, part)[:, ::-1]
        total += float(np.sum(np.abs(recon - part.inputs)))
    return total / data.inputs.size


def laes_reconstruction_mae(laes: LaesModel, batch: BatchLike) -> float:
    data = as_batch(batch)
    steps = _equal_length(data)
    total = 0.0
    for i, m in enumerate(final_states(laes, data)):
        total += float(np.sum(np.abs(laes_decode_unroll(laes, m, steps)[::-1] - data.inputs[i])))
    return total / data.inputs.size


class ReconstructionTrainer(Trainer):
    """
    Trainer whose objective is the reversed-sequence MSE. The validation score
    is 1 - per-value MAE, so higher is better as with accuracy.
    """

    def unrolled_steps(self, data: LabeledSequences) -> int:
        return 2 * data.batch.t_max

    def _shard_pass(
        self, params: ParamBundle, shard: LabeledSequences, keep: np.ndarray, weight: float
    ) -> Tuple[float, Grads]:
        x = shard.batch.inputs
        n, steps, d = x.shape
        trace, dec = _decoder_states(params, shard.batch)

        target = np.transpose(x[:, ::-1], (1, 0, 2))
        diff = dec @ params.w_o.T - target
        norm = float(steps * d * n)
        loss = float(np.sum(diff * diff)) / norm
        dy = 2.0 * diff / norm

        penalty = penalty_terms(params, 0.0, self.config.alpha_act, trace, self.config.act_reg)
        state_grads = penalty.state_grads.copy()
        state_grads[steps:] += dy @ params.w_o
        result = bptt_backward(
            trace,
            params,
            np.zeros_like(trace.logits),
            state_grads=state_grads * weight,
            keep=keep,
        )
        grads = dict(result.grads)
        grads["w_o"] = grads["w_o"] + weight * np.einsum("tbd,tbp->dp", dy, dec)
        return (loss + penalty.loss) * weight, grads

    def score(self, params: ParamBundle, dataset: LabeledSequences) -> float:
        return 1.0 - reconstruction_mae(params, dataset.batch)


def reconstruction_trainer(
    model_kind: str,
    dataset: DatasetSplits,
    config: TrainConfig,
    init_params: ParamBundle,
) -> Tuple[ParamBundle, TrainHistory]:
    """Trains an encoder/decoder reconstruction model; init_params fixes its architecture and readout width (d)."""
    if init_params.n_classes != dataset.train.batch.d:
        raise ShapeError(
            f"reconstruction readout has {init_params.n_classes} outputs, inputs have d={dataset.train.batch.d}"
        )
    return ReconstructionTrainer(model_kind, config).fit(init_params, dataset)


def image_reconstruction(
    encoder: Callable[[np.ndarray], np.ndarray],
    decoder_unroll: Callable[[np.ndarray, int], np.ndarray],
    image_seq,
    shape: Optional[Tuple[int, int]] = None,
    permutation: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """
    Encodes a pixel sequence, unrolls the decoder for T steps and reassembles
    the reversed output stream into an image. `permutation[j]` is the pixel
    emitted at step j when the sequence was permuted.
    """
    seq = np.asarray(image_seq, dtype=np.float64)
    if seq.ndim == 1:
        seq = seq[:, None]
    steps = seq.shape[0]
    decoded = np.asarray(decoder_unroll(encoder(seq), steps), dtype=np.float64)
    if decoded.shape[0] != steps:
        raise ShapeError(f"decoder produced {decoded.shape[0]} steps for a {steps}-step sequence")
    stream = decoded[::-1].reshape(-1)
    if permutation is not None:
        perm = np.asarray(permutation, dtype=np.int64)
        if perm.shape != stream.shape:
            raise ShapeError(f"permutation of length {perm.size} for {stream.size} values")
        restored = np.empty_like(stream)
        restored[perm] = stream
        stream = restored
    if shape is None:
        side = int(round(np.sqrt(stream.size)))
        shape = (side, side)
    if shape[0] * shape[1] != stream.size:
        raise ShapeError(f"cannot arrange {stream.size} values as {shape[0]}x{shape[1]}")
    return stream.reshape(shape)


def laes_image(laes: LaesModel, image_seq, shape=None, permutation=None) -> np.ndarray:
    return image_reconstruction(
        lambda seq: laes_encode(laes, seq)[-1],
        lambda m, steps: laes_decode_unroll(laes, m, steps),
        image_seq,
        shape,
        permutation,
    )


def network_image(params: ParamBundle, image_seq, shape=None, permutation=None) -> np.ndarray:
    """Image from a trained reconstruction network; the 'encoder' here hands the sequence straight to the decoder pass."""
    return image_reconstruction(
        lambda seq: seq,
        lambda seq, steps: autoencoder_reconstruct(params, params.KIND, seq),
        image_seq,
        shape,
        permutation,
    )
