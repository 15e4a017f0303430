from typing import Optional, Union

import numpy as np

from core.exceptions import ShapeError
from core.ingestion.sequences import LabeledSequences
from core.laes.batch import BatchLike, as_batch
from core.models import LAES_HEAD_KINDS, RECURRENT_KINDS
from core.networks import ArchitectureRegistry, ParamBundle
from core.training.heads import LaesClassifier

Classifier = Union[ParamBundle, LaesClassifier]

EVAL_CHUNK = 1024


def _check_kind(params: Classifier, model_kind: str) -> None:
    if model_kind in RECURRENT_KINDS:
        if not isinstance(params, ParamBundle) or params.KIND != model_kind:
            raise ShapeError(f"parameters of type {type(params).__name__} do not belong to {model_kind}")
    elif model_kind in LAES_HEAD_KINDS:
        if not isinstance(params, LaesClassifier) or f"laes_{params.head}" != model_kind:
            raise ShapeError(f"{model_kind} expects a LAES classifier with a matching head")
    else:
        raise ValueError(f"unknown model kind {model_kind!r}")


def predict_logits(params: Classifier, model_kind: str, batch: BatchLike) -> np.ndarray:
    """Final-step logits (N, c), evaluated in chunks."""
    _check_kind(params, model_kind)
    data = as_batch(batch)
    chunks = []
    for start in range(0, data.n, EVAL_CHUNK):
        part = data.subset(range(start, min(start + EVAL_CHUNK, data.n)))
        if isinstance(params, LaesClassifier):
            chunks.append(params.logits(part))
        else:
            chunks.append(ArchitectureRegistry.get(model_kind).forward(params, part).logits)
    return np.vstack(chunks)


def evaluate_accuracy(
    params: Classifier, model_kind: str, dataset: Optional[LabeledSequences]
) -> float:
    """Fraction of sequences whose logit argmax equals the label."""
    if dataset is None or len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    predictions = np.argmax(predict_logits(params, model_kind, dataset.batch), axis=1)
    return float(np.mean(predictions == dataset.labels))
