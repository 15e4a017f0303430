from core.training.backprop import (
    BackpropResult,
    bptt_backward,
    clip_global_norm,
    draw_truncation_mask,
    softmax_cross_entropy,
)
from core.training.evaluation import evaluate_accuracy, predict_logits
from core.training.heads import (
    FeedForwardHead,
    LaesClassifier,
    ff_head_forward,
    ff_head_loss_and_grads,
    fit_ff_head,
    fit_laes_head,
    fit_svm_head,
    svm_objective_path,
)
from core.training.optimizer import AdamState, adam_step
from core.training.penalties import PenaltyResult, penalty_terms
from core.training.trainer import Trainer, train_model

__all__ = [
    "AdamState",
    "BackpropResult",
    "FeedForwardHead",
    "LaesClassifier",
    "PenaltyResult",
    "Trainer",
    "adam_step",
    "bptt_backward",
    "clip_global_norm",
    "draw_truncation_mask",
    "evaluate_accuracy",
    "ff_head_forward",
    "ff_head_loss_and_grads",
    "fit_ff_head",
    "fit_laes_head",
    "fit_svm_head",
    "penalty_terms",
    "predict_logits",
    "softmax_cross_entropy",
    "svm_objective_path",
    "train_model",
]
