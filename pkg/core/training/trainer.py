"""
Minibatch BPTT training loop: seeded shuffling, sharded forward/backward,
penalties, global-norm clipping, Adam and best-validation retention.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np

from core.exceptions import DivergenceError, ShapeError
from core.ingestion.sequences import DatasetSplits, LabeledSequences
from core.models import RECURRENT_KINDS, EpochRecord, TrainConfig, TrainHistory
from core.networks import ArchitectureRegistry, ParamBundle
from core.training.backprop import (
    Grads,
    add_grads,
    bptt_backward,
    clip_global_norm,
    draw_truncation_mask,
    softmax_cross_entropy,
)
from core.training.evaluation import evaluate_accuracy
from core.training.optimizer import AdamState, adam_step
from core.training.penalties import penalty_terms


class Trainer:
    """
    Trains one recurrent model on a DatasetSplits.

    Each minibatch is cut into fixed-size shards that run on a thread pool;
    shard gradients are summed in shard order, so results do not depend on
    the number of workers.
    """

    def __init__(self, model_kind: str, config: TrainConfig):
        if model_kind not in RECURRENT_KINDS:
            raise ValueError(
                f"{model_kind!r} is not trained by backpropagation; expected one of {RECURRENT_KINDS}"
            )
        self.model_kind = model_kind
        self.config = config
        self.arch = ArchitectureRegistry.get(model_kind)
        self.logger = logging.getLogger(self.__class__.__name__)

    # -- per-shard objective -------------------------------------------------

    def _shard_pass(
        self, params: ParamBundle, shard: LabeledSequences, keep: np.ndarray, weight: float
    ) -> Tuple[float, Grads]:
        """Cross-entropy plus activation penalty on one shard, both scaled by the shard's share of the minibatch."""
        trace = self.arch.forward(params, shard.batch)
        loss, dlogits = softmax_cross_entropy(trace.logits, shard.labels)
        penalty = penalty_terms(params, 0.0, self.config.alpha_act, trace, self.config.act_reg)
        result = bptt_backward(
            trace,
            params,
            dlogits * weight,
            state_grads=penalty.state_grads * weight,
            keep=keep,
        )
        return (loss + penalty.loss) * weight, result.grads

    def score(self, params: ParamBundle, dataset: LabeledSequences) -> float:
        return evaluate_accuracy(params, self.model_kind, dataset)

    def unrolled_steps(self, data: LabeledSequences) -> int:
        """Number of recurrent steps the network runs on `data`."""
        return data.batch.t_max

    # -- minibatch -----------------------------------------------------------

    def minibatch_loss_and_grads(
        self,
        params: ParamBundle,
        minibatch: LabeledSequences,
        rng: Optional[np.random.Generator],
        executor: Optional[ThreadPoolExecutor] = None,
    ) -> Tuple[float, Grads]:
        n = len(minibatch)
        keep = draw_truncation_mask(self.config.trunc_p, self.unrolled_steps(minibatch), n, rng)
        shards = []
        for start in range(0, n, self.config.shard_size):
            cols = np.arange(start, min(start + self.config.shard_size, n))
            shard = minibatch.take(cols)
            shards.append((shard, keep[: self.unrolled_steps(shard), cols], cols.size / n))

        def run(item):
            shard, shard_keep, weight = item
            return self._shard_pass(params, shard, shard_keep, weight)

        results: List[Tuple[float, Grads]]
        if executor is None or len(shards) == 1:
            results = [run(item) for item in shards]
        else:
            results = list(executor.map(run, shards))

        loss, grads = 0.0, None
        for shard_loss, shard_grads in results:
            loss += shard_loss
            grads = add_grads(grads, shard_grads)

        ortho = penalty_terms(params, self.config.lambda_ortho, 0.0)
        return loss + ortho.loss, add_grads(grads, ortho.grads)

    # -- epoch loop ----------------------------------------------------------

    def fit(self, init_params: ParamBundle, dataset: DatasetSplits) -> Tuple[ParamBundle, TrainHistory]:
        if init_params.KIND != self.model_kind:
            raise ShapeError(f"initial parameters are {init_params.KIND}, trainer expects {self.model_kind}")
        train = dataset.train
        if train is None or len(train) == 0:
            raise ValueError("empty training set")
        val = dataset.val
        if val is None:
            self.logger.warning("No validation split; selecting the best epoch on the training set")
            val = train

        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        params = init_params
        adam = AdamState.zeros_like(params)
        history = TrainHistory()

        best_params = params
        history.best_val_acc = self.score(params, val)
        self.logger.info("🏁 %s initial validation score %.4f", self.model_kind, history.best_val_acc)

        executor = ThreadPoolExecutor(max_workers=cfg.max_workers) if cfg.max_workers > 1 else None
        try:
            n = len(train)
            for epoch in range(1, cfg.epochs + 1):
                started = time.perf_counter()
                order = rng.permutation(n)
                total = 0.0
                for step, start in enumerate(range(0, n, cfg.batch_size), start=1):
                    idx = order[start : start + cfg.batch_size]
                    loss, grads = self.minibatch_loss_and_grads(params, train.take(idx), rng, executor)
                    if not np.isfinite(loss):
                        self.logger.error("💥 Non-finite loss at epoch %d step %d", epoch, step)
                        raise DivergenceError(
                            f"loss became {loss} at epoch {epoch}, step {step}", epoch=epoch, step=step
                        )
                    grads, _ = clip_global_norm(grads, cfg.clip_norm)
                    params, adam = adam_step(
                        params, grads, adam, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
                    )
                    total += loss * idx.size

                val_score = self.score(params, val)
                record = EpochRecord(
                    epoch=epoch,
                    train_loss=total / n,
                    val_acc=val_score,
                    seconds=time.perf_counter() - started,
                )
                history.records.append(record)
                if val_score > history.best_val_acc:
                    history.best_val_acc = val_score
                    history.best_epoch = epoch
                    best_params = params
                self.logger.info(
                    "📈 epoch %d/%d loss=%.6f val=%.4f (%.1fs)",
                    epoch,
                    cfg.epochs,
                    record.train_loss,
                    val_score,
                    record.seconds,
                )
        finally:
            if executor is not None:
                executor.shutdown(wait=True)

        self.logger.info("✅ Best validation score %.4f at epoch %d", history.best_val_acc, history.best_epoch)
        return best_params, history


def train_model(
    model_kind: str,
    init_params: ParamBundle,
    dataset: DatasetSplits,
    config: TrainConfig,
) -> Tuple[ParamBundle, TrainHistory]:
    return Trainer(model_kind, config).fit(init_params, dataset)
