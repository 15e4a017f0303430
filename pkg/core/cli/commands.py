"""
The seqmem commands. Each takes the validated ExperimentConfig plus the
parsed command line and returns a process exit code; expected failures are
raised as SeqmemError subclasses and mapped to exit codes by main().
"""
import logging
import os
from typing import Optional, Tuple, Union

import numpy as np

from core.cli.config import read_config_file
from core.diagnostics.gradients import gradient_through_time
from core.diagnostics.probes import collect_states, lag_reconstruction_probe
from core.diagnostics.reconstruction import (
    image_reconstruction,
    laes_image,
    laes_reconstruction_mae,
    network_image,
    reconstruction_mae,
    reconstruction_trainer,
)
from core.exceptions import CheckpointError, ConfigError
from core.export.checkpoint import load_model, save_model
from core.export.images import write_pgm
from core.export.tables import (
    write_gradient_csv,
    write_grid_csv,
    write_history_csv,
    write_lag_probe_csv,
)
from core.ingestion.sequences import DatasetSplits, LabeledSequences, load_mnist_split
from core.ingestion.synthetic import synthetic_splits
from core.initialization import (
    init_linear_rnn_from_laes,
    init_lmn_from_laes,
    init_orthogonal_lmn,
    init_orthogonal_rnn,
    init_random_lstm,
    init_random_rnn,
    init_rnn_from_laes,
    laes_readout,
)
from core.laes import (
    LaesFit,
    LaesModel,
    final_states,
    fit_laes_detailed,
    laes_decode_unroll,
    laes_encode,
    stm_error,
)
from core.models import (
    LAES_HEAD_KINDS,
    RECURRENT_KINDS,
    ExperimentConfig,
    LaesFitReport,
    RunSummary,
)
from core.networks import LinearRnnParams, ParamBundle
from core.training.evaluation import evaluate_accuracy
from core.training.grid import GridRunner, best_row
from core.training.heads import LaesClassifier, fit_laes_head
from core.training.trainer import train_model

logger = logging.getLogger(__name__)

STM_REPORT_SAMPLES = 16


# -- shared helpers -----------------------------------------------------------


def load_splits(config: ExperimentConfig) -> DatasetSplits:
    if config.task == "synthetic":
        return synthetic_splits(
            config.synthetic_n,
            config.synthetic_test_n,
            config.synthetic_t,
            config.synthetic_d,
            config.seed,
            config.synthetic_margin,
            config.synthetic_scale,
        )
    return load_mnist_split(
        config.train_images,
        config.train_labels,
        config.test_images,
        config.test_labels,
        permuted=config.task == "perm_mnist",
        train_count=config.train_count,
        val_count=config.val_count,
        test_count=config.test_count,
        downsample=config.downsample,
        scale=config.scale,
        permutation_seed=config.permutation_seed,
        seed=config.seed,
    )


def output_path(config: ExperimentConfig, name: str) -> str:
    os.makedirs(config.output_dir, exist_ok=True)
    return os.path.join(config.output_dir, name)


def _write_json(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(payload.model_dump_json(indent=2))
        handle.write("\n")


def _probe_set(splits: DatasetSplits, count: int) -> LabeledSequences:
    data = splits.test or splits.val or splits.train
    return data.take(np.arange(min(count, len(data))))


def _image_shape(config: ExperimentConfig) -> Tuple[int, int]:
    if config.task == "synthetic":
        return config.synthetic_t, config.synthetic_d
    side = 28 // config.downsample
    return side, side


def fit_laes_from_config(config: ExperimentConfig, splits: DatasetSplits) -> LaesFit:
    cfg = config.laes_config()
    return fit_laes_detailed(
        splits.train.batch,
        cfg.hidden,
        cfg.prefix_stride,
        cfg.max_prefixes,
        cfg.seed,
        cfg.center,
        cfg.solver,
        cfg.max_sequences,
    )


def laes_fit_report(fit: LaesFit, data: LabeledSequences, samples: int = STM_REPORT_SAMPLES) -> LaesFitReport:
    """Energy bookkeeping of a fit plus the mean STM error over the first `samples` training sequences."""
    model = fit.model
    count = min(samples, len(data))
    errors = [
        stm_error(
            lambda seq: laes_encode(model, seq),
            lambda m, steps: laes_decode_unroll(model, m, steps),
            data.batch.sequence(i),
        )
        for i in range(count)
    ]
    total = fit.total_energy
    return LaesFitReport(
        rank_used=int(np.sum(fit.svd.s > 0)),
        prefix_rows=fit.prefix_shape[0],
        prefix_cols=fit.prefix_shape[1],
        solver=fit.svd.solver,
        total_energy=total,
        retained_energy=fit.retained_energy,
        tail_energy=fit.tail_energy,
        relative_tail=fit.tail_energy / total if total > 0 else 0.0,
        stm_error_mean=float(np.mean(errors)),
        stm_error_samples=count,
    )


Loaded = Union[ParamBundle, LaesModel, LaesClassifier]


def _load(path: Optional[str], flag: str) -> Tuple[str, Loaded]:
    if not path:
        raise ConfigError("a checkpoint is required for this command", key=flag)
    return load_model(path)


def _laes_of(kind: str, model: Loaded) -> Optional[LaesModel]:
    if kind == "laes":
        return model
    if kind in LAES_HEAD_KINDS:
        return model.laes
    return None


# -- initialization -----------------------------------------------------------


def scheme_params(kind: str, init: str, p: int, d: int, c: int, seed: int) -> ParamBundle:
    """Seeded orthogonal or random initialization for a recurrent kind."""
    if kind == "rnn":
        return init_orthogonal_rnn(p, d, c, seed) if init == "ortho" else init_random_rnn(p, d, c, seed)
    if kind == "lstm":
        if init == "ortho":
            logger.info("LSTM has no orthogonal scheme; using its standard random initialization")
        return init_random_lstm(p, d, c, seed)
    if init != "ortho":
        raise ConfigError(f"{kind} supports init=ortho or init=laes, not {init}", key="init")
    if kind == "lmn":
        return init_orthogonal_lmn(p, d, c, seed)
    rnn = init_orthogonal_rnn(p, d, c, seed)
    return LinearRnnParams(a=rnn.v, b=rnn.u, w_o=rnn.w_o)


def laes_params(kind: str, laes: LaesModel, splits: DatasetSplits, config: ExperimentConfig) -> ParamBundle:
    """Network initialized from an LAES, with a least-squares readout on its encodings."""
    train = splits.train
    readout = laes_readout(laes, train.batch, train.labels, config.ridge, train.n_classes)
    if kind == "linear_rnn":
        return init_linear_rnn_from_laes(laes, readout)
    if kind == "rnn":
        return init_rnn_from_laes(laes, readout)
    if kind == "lmn":
        return init_lmn_from_laes(laes, readout)
    raise ConfigError(f"{kind} cannot be initialized from a LAES", key="init")


def initial_params(config: ExperimentConfig, splits: DatasetSplits, init_from: Optional[str]) -> ParamBundle:
    kind = config.model
    if init_from:
        loaded_kind, model = load_model(init_from)
        if loaded_kind == kind:
            logger.info("♻️ Resuming %s from %s", kind, init_from)
            return model
        laes = _laes_of(loaded_kind, model)
        if laes is None:
            raise CheckpointError(f"{init_from} holds {loaded_kind}, cannot initialize {kind}")
        return laes_params(kind, laes, splits, config)
    if config.init == "laes":
        return laes_params(kind, fit_laes_from_config(config, splits).model, splits, config)
    train = splits.train
    return scheme_params(kind, config.init, config.hidden, train.batch.d, train.n_classes, config.seed)


# -- commands -----------------------------------------------------------------


def cmd_fit_laes(config: ExperimentConfig, args) -> int:
    splits = load_splits(config)
    fit = fit_laes_from_config(config, splits)
    report = laes_fit_report(fit, splits.train)
    save_model(output_path(config, "laes.ckpt"), fit.model)
    _write_json(output_path(config, "fit_report.json"), report)
    logger.info(
        "🧠 LAES p=%d: tail energy %.6g (relative %.3g), mean STM error %.6g",
        fit.model.p,
        report.tail_energy,
        report.relative_tail,
        report.stm_error_mean,
    )
    print(f"tail_energy={report.tail_energy:.9g}")
    return 0


def _train_laes_head(
    config: ExperimentConfig, splits: DatasetSplits, init_from: Optional[str]
) -> Tuple[LaesClassifier, Optional[float]]:
    laes = None
    if init_from:
        kind, model = load_model(init_from)
        laes = _laes_of(kind, model)
        if laes is None:
            raise CheckpointError(f"{init_from} holds {kind}, not a LAES")
    if laes is None:
        laes = fit_laes_from_config(config, splits).model
    train = splits.train
    classifier = fit_laes_head(
        config.model.split("_", 1)[1],
        laes,
        final_states(laes, train.batch),
        train.labels,
        config.train_config(),
        train.n_classes,
        ff_hidden=config.ff_hidden,
        svm_c=config.svm_c,
        svm_epochs=config.svm_epochs,
    )
    val_acc = evaluate_accuracy(classifier, config.model, splits.val) if splits.val is not None else None
    return classifier, val_acc


def _fmt(value: Optional[float]) -> str:
    return "nan" if value is None else f"{value:.9g}"


def _train_reconstruction(config: ExperimentConfig, splits: DatasetSplits, init_from: Optional[str]) -> int:
    kind = config.model
    d = splits.train.batch.d
    if init_from:
        loaded_kind, params = load_model(init_from)
        if loaded_kind != kind:
            raise CheckpointError(f"{init_from} holds {loaded_kind}, cannot resume {kind} reconstruction")
    elif config.init == "laes":
        raise ConfigError("reconstruction models start from init=ortho or init=random", key="init")
    else:
        params = scheme_params(kind, config.init, config.hidden, d, d, config.seed)

    trained, history = reconstruction_trainer(kind, splits, config.train_config(), params)
    write_history_csv(history, output_path(config, "history.csv"))
    save_model(output_path(config, "model.ckpt"), trained)
    test_mae = reconstruction_mae(trained, splits.test.batch) if splits.test is not None else None
    summary = RunSummary(
        model=kind,
        init="checkpoint" if init_from else config.init,
        objective=config.objective,
        seed=config.seed,
        best_epoch=history.best_epoch,
        best_val_acc=history.best_val_acc,
        test_mae=test_mae,
        epochs_run=len(history),
        scale=splits.scale,
    )
    _write_json(output_path(config, "run_summary.json"), summary)
    print(f"test_mae={_fmt(test_mae)}")
    return 0


def cmd_train(config: ExperimentConfig, args) -> int:
    splits = load_splits(config)
    init_from = getattr(args, "init_from", None)

    if config.model in LAES_HEAD_KINDS:
        if config.objective != "classify":
            raise ConfigError(f"{config.model} only supports objective=classify", key="objective")
        classifier, val_acc = _train_laes_head(config, splits, init_from)
        if val_acc is None:
            val_acc = evaluate_accuracy(classifier, config.model, splits.train)
        test_acc = evaluate_accuracy(classifier, config.model, splits.test) if splits.test is not None else None
        save_model(output_path(config, "model.ckpt"), classifier)
        summary = RunSummary(
            model=config.model,
            init="laes",
            objective=config.objective,
            seed=config.seed,
            best_epoch=0,
            best_val_acc=val_acc,
            test_acc=test_acc,
            epochs_run=config.epochs if config.model == "laes_ff" else 0,
            scale=splits.scale,
        )
        _write_json(output_path(config, "run_summary.json"), summary)
        print(f"test_acc={_fmt(test_acc)}")
        return 0

    if config.objective == "reconstruct":
        return _train_reconstruction(config, splits, init_from)

    params = initial_params(config, splits, init_from)
    trained, history = train_model(config.model, params, splits, config.train_config())
    write_history_csv(history, output_path(config, "history.csv"))
    save_model(output_path(config, "model.ckpt"), trained)
    test_acc = evaluate_accuracy(trained, config.model, splits.test) if splits.test is not None else None
    summary = RunSummary(
        model=config.model,
        init="checkpoint" if init_from else config.init,
        objective=config.objective,
        seed=config.seed,
        best_epoch=history.best_epoch,
        best_val_acc=history.best_val_acc,
        test_acc=test_acc,
        epochs_run=len(history),
        scale=splits.scale,
    )
    _write_json(output_path(config, "run_summary.json"), summary)
    print(f"test_acc={_fmt(test_acc)}")
    return 0


PATH_KEYS = ("data_dir", "train_images", "train_labels", "test_images", "test_labels")


def cmd_grid(config: ExperimentConfig, args) -> int:
    base = read_config_file(args.config)
    for key in PATH_KEYS:
        value = getattr(config, key)
        if value is not None:
            base[key] = value
    base["seed"] = str(config.seed)
    base["epochs"] = str(config.epochs)

    extra = []
    for flag, value in (("--log-level", args.log_level), ("--log-format", args.log_format)):
        if value:
            extra += [flag, value]

    runner = GridRunner(base, config.grid_config(), config.output_dir, jobs=args.jobs, extra_args=extra)
    rows = runner.run()
    write_grid_csv(rows, output_path(config, "grid.csv"))
    best = best_row(rows)
    if best is None:
        logger.error("❌ No grid cell finished successfully")
        return 1
    logger.info("🏆 Best cell %s with validation accuracy %.4f", best.cell_id, best.best_val_acc)
    print(f"best_cell={best.cell_id} best_val_acc={_fmt(best.best_val_acc)} test_acc={_fmt(best.test_acc)}")
    return 0


def _probe_network(config: ExperimentConfig, splits: DatasetSplits, args) -> Tuple[str, ParamBundle]:
    path = getattr(args, "checkpoint", None) or getattr(args, "init_from", None)
    if path:
        kind, model = load_model(path)
        if kind in RECURRENT_KINDS:
            return kind, model
        # an LAES is probed as the linear RNN it defines; the state Jacobian is B
        # whatever the input offset, so a centered fit drops its mean here
        laes = _laes_of(kind, model).model_copy(update={"mean": None})
        return "linear_rnn", laes_params("linear_rnn", laes, splits, config)
    if config.model not in RECURRENT_KINDS:
        raise ConfigError("gradient probes need a recurrent model or a checkpoint", key="model")
    return config.model, initial_params(config, splits, None)


def cmd_probe_grad(config: ExperimentConfig, args) -> int:
    splits = load_splits(config)
    probe = _probe_set(splits, config.probe_count)
    kind, params = _probe_network(config, splits, args)
    labels = probe.labels if params.n_classes == probe.n_classes else None
    curve = gradient_through_time(params, kind, probe.batch, config.trunc_p, config.seed, labels=labels)
    write_gradient_csv(curve, output_path(config, "gradient_curve.csv"), config.csv_stride)
    last, first = curve[0].grad_norm, curve[-1].grad_norm
    logger.info(
        "📉 %s gradient norm %.3g at t=%d, %.3g at t=0 (ratio %.3g)",
        kind,
        last,
        curve[0].t,
        first,
        first / last if last > 0 else float("nan"),
    )
    return 0


def cmd_probe_reco(config: ExperimentConfig, args) -> int:
    splits = load_splits(config)
    probe = _probe_set(splits, config.probe_count)
    path = getattr(args, "checkpoint", None) or getattr(args, "init_from", None)
    if path:
        kind, model = load_model(path)
        encoder = _laes_of(kind, model) or model
        tag = kind
    elif config.model in RECURRENT_KINDS:
        encoder = initial_params(config, splits, None)
        tag = f"{config.model}-{config.init}"
    else:
        encoder = fit_laes_from_config(config, splits).model
        tag = "laes"

    shortest = int(probe.batch.lengths.min())
    lags = [k for k in config.probe_lags if k < shortest]
    dropped = sorted(set(config.probe_lags) - set(lags))
    if dropped:
        logger.warning("Dropping lags %s: sequences have only %d steps", dropped, shortest)
    if not lags:
        raise ConfigError(f"no probe lag below the sequence length {shortest}", key="probe_lags")

    results = lag_reconstruction_probe(
        collect_states(encoder, probe.batch),
        probe.batch.sequences(),
        lags,
        config.probe_ridge,
        model_tag=tag,
        seed=config.seed,
    )
    write_lag_probe_csv(results, output_path(config, "lag_probe.csv"))
    for row in results:
        logger.info("🔎 %s lag %d: mse %.6g", tag, row.k, row.mse)
    return 0


def _stream_image(seq: np.ndarray, shape, permutation) -> np.ndarray:
    return image_reconstruction(lambda s: s, lambda s, steps: s[::-1], seq, shape, permutation)


def cmd_reconstruct(config: ExperimentConfig, args) -> int:
    kind, model = _load(getattr(args, "checkpoint", None) or getattr(args, "init_from", None), "--checkpoint")
    splits = load_splits(config)
    data = splits.test or splits.val or splits.train
    index = getattr(args, "sample_index", 0) or 0
    if not 0 <= index < len(data):
        raise ConfigError(f"sample index {index} outside [0, {len(data)})", key="--sample-index")
    seq = data.batch.sequence(index)
    shape = _image_shape(config)

    laes = _laes_of(kind, model)
    if laes is not None:
        image = laes_image(laes, seq, shape, splits.permutation)
        mae = laes_reconstruction_mae(laes, seq[None])
    else:
        if model.n_classes != seq.shape[1]:
            raise CheckpointError(f"{kind} checkpoint is a classifier, not a reconstruction model")
        image = network_image(model, seq, shape, splits.permutation)
        mae = reconstruction_mae(model, seq[None])
    original = _stream_image(seq, shape, splits.permutation)

    if splits.pixel_mean is not None:
        image = image * splits.pixel_std + splits.pixel_mean
        original = original * splits.pixel_std + splits.pixel_mean
    write_pgm(output_path(config, f"reconstruction_{index}.pgm"), image)
    write_pgm(output_path(config, f"original_{index}.pgm"), original)
    logger.info("🖼️ %s reconstruction of sample %d: MAE %.6g", kind, index, mae)
    print(f"mae={mae:.9g}")
    return 0


def cmd_eval(config: ExperimentConfig, args) -> int:
    kind, model = _load(getattr(args, "checkpoint", None) or getattr(args, "init_from", None), "--checkpoint")
    if kind == "laes":
        raise CheckpointError("a bare LAES has no classifier head; train laes_linear, laes_svm or laes_ff")
    splits = load_splits(config)
    data = splits.test or splits.val or splits.train
    accuracy = evaluate_accuracy(model, kind, data)
    logger.info("🎯 %s accuracy %.4f on %d sequences", kind, accuracy, len(data))
    print(f"test_acc={accuracy:.9g}")
    return 0


COMMANDS = {
    "fit-laes": cmd_fit_laes,
    "train": cmd_train,
    "grid": cmd_grid,
    "probe-grad": cmd_probe_grad,
    "probe-reco": cmd_probe_reco,
    "reconstruct": cmd_reconstruct,
    "eval": cmd_eval,
}
