"""
Classifier heads on top of a frozen LAES: closed-form linear readout,
one-vs-rest linear SVM and a one-hidden-layer tanh network.
"""
import logging
from typing import ClassVar, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from core.exceptions import ShapeError
from core.initialization import fit_linear_head
from core.laes import LaesModel, final_states
from core.laes.batch import BatchLike
from core.models import TrainConfig
from core.networks import ParamBundle
from core.training.backprop import clip_global_norm, softmax_cross_entropy
from core.training.optimizer import AdamState, adam_step

logger = logging.getLogger(__name__)

HeadKind = Literal["linear", "svm", "ff"]


class FeedForwardHead(ParamBundle):
    """
    logits = W2 tanh(W1 s + b1) + b2. With zero hidden units (W1 is 0 x p)
    the head is linear: logits = W2 s + b2.
    """

    KIND: ClassVar[str] = "ff_head"

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def _check_shapes(self) -> None:
        hidden, p = self.w1.shape
        self._expect("b1", (1, hidden))
        self._expect("w2", (self.w2.shape[0], hidden if hidden else p))
        self._expect("b2", (1, self.w2.shape[0]))

    @property
    def hidden(self) -> int:
        return int(self.w1.shape[0])

    @property
    def input_size(self) -> int:
        return int(self.w1.shape[1])

    @property
    def n_classes(self) -> int:
        return int(self.w2.shape[0])


def _ff_features(head: FeedForwardHead, states: np.ndarray) -> np.ndarray:
    if states.ndim != 2 or states.shape[1] != head.input_size:
        raise ShapeError(f"head expects (N, {head.input_size}) states, got {states.shape}")
    if head.hidden == 0:
        return states
    return np.tanh(states @ head.w1.T + head.b1)


def ff_head_forward(head: FeedForwardHead, states: np.ndarray) -> np.ndarray:
    s = np.asarray(states, dtype=np.float64)
    return _ff_features(head, s) @ head.w2.T + head.b2


def ff_head_loss_and_grads(
    head: FeedForwardHead, states: np.ndarray, labels
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean cross-entropy of the head on (states, labels) and exact gradients for every tensor."""
    s = np.asarray(states, dtype=np.float64)
    a = _ff_features(head, s)
    loss, dlogits = softmax_cross_entropy(a @ head.w2.T + head.b2, labels)
    grads = {
        "w2": dlogits.T @ a,
        "b2": dlogits.sum(axis=0, keepdims=True),
        "w1": np.zeros_like(head.w1),
        "b1": np.zeros_like(head.b1),
    }
    if head.hidden:
        dz = (dlogits @ head.w2) * (1.0 - a * a)
        grads["w1"] = dz.T @ s
        grads["b1"] = dz.sum(axis=0, keepdims=True)
    return loss, grads


def init_ff_head(p: int, hidden: int, n_classes: int, seed: int) -> FeedForwardHead:
    rng = np.random.default_rng(seed)
    width = hidden if hidden else p
    return FeedForwardHead(
        w1=rng.uniform(-1.0, 1.0, size=(hidden, p)) / np.sqrt(p),
        b1=np.zeros((1, hidden)),
        w2=rng.uniform(-1.0, 1.0, size=(n_classes, width)) / np.sqrt(width),
        b2=np.zeros((1, n_classes)),
    )


def fit_ff_head(
    states: np.ndarray,
    labels,
    hidden: int,
    config: TrainConfig,
    n_classes: Optional[int] = None,
) -> FeedForwardHead:
    """Trains the head with minibatch Adam on cross-entropy; the states stay fixed."""
    s = np.asarray(states, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if s.ndim != 2 or s.shape[0] != y.shape[0]:
        raise ShapeError(f"{s.shape} states do not match {y.shape[0]} labels")
    c = n_classes if n_classes is not None else int(y.max()) + 1
    head = init_ff_head(s.shape[1], hidden, c, config.seed)
    state = AdamState.zeros_like(head)
    rng = np.random.default_rng(config.seed)
    n = s.shape[0]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = ff_head_loss_and_grads(head, s[idx], y[idx])
            grads, _ = clip_global_norm(grads, config.clip_norm)
            head, state = adam_step(
                head, grads, state, config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps
            )
            total += loss * idx.size
        logger.debug("FF head epoch %d: train loss %.6f", epoch, total / n)
    return head


def _hinge_objective(w: np.ndarray, s: np.ndarray, signs: np.ndarray, lam: float) -> float:
    margins = np.maximum(0.0, 1.0 - signs * (s @ w.T))
    return 0.5 * lam * float(np.sum(w * w)) + float(margins.sum(axis=1).mean())


def svm_objective_path(
    states: np.ndarray,
    labels,
    c_reg: float = 1.0,
    epochs: int = 50,
    seed: int = 0,
    n_classes: Optional[int] = None,
) -> List[Tuple[float, np.ndarray]]:
    """
    One-vs-rest linear SVM (no intercept) trained by projected stochastic
    subgradient descent on the L2-regularized hinge loss, lambda = 1 / (C N).

    Returns one (objective, weights) pair per epoch. The weights are the
    epoch-end averaged iterate when it lowers the regularized hinge objective,
    otherwise the pair kept from the previous epoch, so objectives never rise.
    """
    s = np.asarray(states, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if s.ndim != 2 or s.shape[0] != y.shape[0]:
        raise ShapeError(f"{s.shape} states do not match {y.shape[0]} labels")
    if np.unique(y).size < 2:
        raise ValueError("single-class data: an SVM needs at least two classes")
    c = n_classes if n_classes is not None else int(y.max()) + 1
    n, p = s.shape
    lam = 1.0 / (c_reg * n)
    radius = 1.0 / np.sqrt(lam)
    signs = -np.ones((n, c))
    signs[np.arange(n), y] = 1.0

    rng = np.random.default_rng(seed)
    w = np.zeros((c, p))
    w_avg = np.zeros((c, p))
    kept = (_hinge_objective(w_avg, s, signs, lam), w_avg.copy())
    path: List[Tuple[float, np.ndarray]] = []
    t = 0
    for epoch in range(1, epochs + 1):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            violated = signs[i] * (w @ s[i]) < 1.0
            w *= 1.0 - eta * lam
            w[violated] += eta * signs[i, violated][:, None] * s[i]
            norms = np.linalg.norm(w, axis=1, keepdims=True)
            w = np.where(norms > radius, w * (radius / np.maximum(norms, 1e-300)), w)
            w_avg += (w - w_avg) / t
        objective = _hinge_objective(w_avg, s, signs, lam)
        logger.debug("SVM epoch %d: objective %.6f", epoch, objective)
        if objective <= kept[0]:
            kept = (objective, w_avg.copy())
        path.append(kept)
    return path


def fit_svm_head(
    states: np.ndarray,
    labels,
    c_reg: float = 1.0,
    epochs: int = 50,
    seed: int = 0,
    n_classes: Optional[int] = None,
) -> np.ndarray:
    """The weights kept after the last epoch of svm_objective_path, shape (c, p)."""
    if epochs < 1:
        raise ValueError("an SVM head needs at least one epoch")
    return svm_objective_path(states, labels, c_reg, epochs, seed, n_classes)[-1][1]


class LaesClassifier(BaseModel):
    """A frozen LAES encoder plus one of the closed-form or shallow heads."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    laes: LaesModel
    head: HeadKind
    w: Optional[np.ndarray] = None
    ff: Optional[FeedForwardHead] = None

    @model_validator(mode="after")
    def _validate(self) -> "LaesClassifier":
        if self.head == "ff":
            if self.ff is None:
                raise ShapeError("ff head requires feedforward parameters")
            if self.ff.input_size != self.laes.p:
                raise ShapeError(f"ff head reads {self.ff.input_size} features, LAES has {self.laes.p}")
        elif self.w is None or self.w.ndim != 2 or self.w.shape[1] != self.laes.p:
            raise ShapeError(f"{self.head} head needs a c x {self.laes.p} matrix")
        return self

    @property
    def n_classes(self) -> int:
        return self.ff.n_classes if self.head == "ff" else int(self.w.shape[0])

    def logits_from_states(self, states: np.ndarray) -> np.ndarray:
        if self.head == "ff":
            return ff_head_forward(self.ff, states)
        return states @ self.w.T

    def logits(self, batch: BatchLike) -> np.ndarray:
        return self.logits_from_states(final_states(self.laes, batch))


def fit_laes_head(
    head: HeadKind,
    laes: LaesModel,
    states: np.ndarray,
    labels,
    config: TrainConfig,
    n_classes: int,
    ff_hidden: int = 256,
    svm_c: float = 1.0,
    svm_epochs: int = 50,
) -> LaesClassifier:
    """Fits the requested head on precomputed LAES final states."""
    if head == "linear":
        w = fit_linear_head(states, labels, config.ridge, n_classes)
        return LaesClassifier(laes=laes, head=head, w=w)
    if head == "svm":
        w = fit_svm_head(states, labels, svm_c, svm_epochs, config.seed, n_classes)
        return LaesClassifier(laes=laes, head=head, w=w)
    if head == "ff":
        ff = fit_ff_head(states, labels, ff_hidden, config, n_classes)
        return LaesClassifier(laes=laes, head=head, ff=ff)
    raise ValueError(f"unknown head {head!r}")
