"""
Desk-scale sequential MNIST checks. Needs the four MNIST IDX files in
$SEQMEM_DATA_DIR; every test is skipped otherwise. Trained models are cached
for the lifetime of the process so the checks share one training run per model.
"""
import filecmp
import functools
import os
import tempfile

import pandas as pd
import pytest

from seqmem_runner import derived_config, printed, run_seqmem

DATA_DIR = os.getenv("SEQMEM_DATA_DIR", "")
HAS_MNIST = any(
    os.path.exists(os.path.join(DATA_DIR, "train-images-idx3-ubyte" + suffix)) for suffix in ("", ".gz")
)
needs_mnist = pytest.mark.skipif(not HAS_MNIST, reason="MNIST files not found in SEQMEM_DATA_DIR")

PIXELS = 14 * 14
RECONSTRUCTION_HIDDEN = 100
RECALL_LAGS = (1, 100)

_WORKDIR = tempfile.TemporaryDirectory(prefix="seqmem_desk_")


def _config(tag: str, **updates) -> str:
    folder = os.path.join(_WORKDIR.name, tag)
    return derived_config("seq_mnist_desk.env", os.path.join(_WORKDIR.name, f"{tag}.env"), output_dir=folder, **updates)


def _folder(tag: str) -> str:
    return os.path.join(_WORKDIR.name, tag)


@functools.lru_cache(maxsize=None)
def _trained(model: str, init: str) -> float:
    """Trains a classifier once per process; returns its test accuracy."""
    accuracy = printed(run_seqmem("train", _config(f"{model}_{init}", model=model, init=init)), "test_acc")
    print(f"{model:>4} {init:<6} test_acc={accuracy:.4f}")
    return accuracy


def _lag_errors(model: str, init: str) -> pd.Series:
    _trained(model, init)
    tag = f"{model}_{init}"
    checkpoint = os.path.join(_folder(tag), "model.ckpt")
    config = _config(f"{tag}_lags", model=model, init=init, probe_lags=",".join(str(k) for k in RECALL_LAGS))
    run_seqmem("probe-reco", config, "--checkpoint", checkpoint)
    return pd.read_csv(os.path.join(_folder(f"{tag}_lags"), "lag_probe.csv")).set_index("k")["mse"]


@needs_mnist
def test_laes_initialization_beats_orthogonal():
    print("--- Sequential MNIST: LAES vs orthogonal initialization ---")
    lmn_laes = _trained("lmn", "laes")
    lmn_ortho = _trained("lmn", "ortho")
    rnn_laes = _trained("rnn", "laes")
    rnn_ortho = _trained("rnn", "ortho")

    assert lmn_laes >= lmn_ortho + 0.005
    assert rnn_laes >= rnn_ortho + 0.03
    assert lmn_laes >= rnn_laes


@needs_mnist
def test_trained_laes_lmn_recalls_short_and_distant_inputs():
    print("--- Sequential MNIST: lag reconstruction from trained models ---")
    lmn_laes = _lag_errors("lmn", "laes")
    lmn_ortho = _lag_errors("lmn", "ortho")
    lstm = _lag_errors("lstm", "random")
    print(pd.DataFrame({"lmn-laes": lmn_laes, "lmn-ortho": lmn_ortho, "lstm": lstm}))
    for k in RECALL_LAGS:
        assert lmn_laes[k] <= lmn_ortho[k]
        assert lmn_laes[k] <= lstm[k]


@needs_mnist
def test_exact_rank_laes_reconstructs_images():
    print("--- Sequential MNIST: image reconstruction ---")
    laes_config = _config("laes_exact", hidden=PIXELS)
    run_seqmem("fit-laes", laes_config)
    laes_mae = printed(
        run_seqmem("reconstruct", laes_config, "--checkpoint", os.path.join(_folder("laes_exact"), "laes.ckpt")), "mae"
    )
    print(f"LAES mae={laes_mae:.3g}")
    assert laes_mae <= 0.05

    for model, init, lambda_ortho in (("rnn", "random", 0.0), ("lstm", "random", 0.0), ("rnn", "ortho", 1e-3)):
        tag = f"reco_{model}_{init}"
        config = _config(
            tag,
            model=model,
            init=init,
            objective="reconstruct",
            hidden=RECONSTRUCTION_HIDDEN,
            lambda_ortho=lambda_ortho,
        )
        run_seqmem("train", config)
        bp_mae = printed(run_seqmem("reconstruct", config, "--checkpoint", os.path.join(_folder(tag), "model.ckpt")), "mae")
        print(f"{model} {init} mae={bp_mae:.3g}")
        assert bp_mae >= 3 * laes_mae


@needs_mnist
def test_training_is_reproducible():
    print("--- Sequential MNIST: repeated LMN-laes run ---")
    first = _trained("lmn", "laes")
    config = _config("lmn_laes_repeat", model="lmn", init="laes")
    second = printed(run_seqmem("train", config), "test_acc")
    print(f"first={first!r} second={second!r}")
    assert second == first
    assert filecmp.cmp(
        os.path.join(_folder("lmn_laes"), "model.ckpt"),
        os.path.join(_folder("lmn_laes_repeat"), "model.ckpt"),
        shallow=False,
    )


if __name__ == "__main__":
    test_laes_initialization_beats_orthogonal()
    test_trained_laes_lmn_recalls_short_and_distant_inputs()
    test_exact_rank_laes_reconstructs_images()
    test_training_is_reproducible()
