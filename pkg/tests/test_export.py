import os
import tempfile
import unittest

import numpy as np
import pandas as pd

from core.exceptions import CheckpointError
from core.export.checkpoint import (
    MAGIC,
    checkpoint_tensors,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    load_model,
    model_from_checkpoint,
    save_checkpoint,
    save_model,
)
from core.export.images import read_pgm, to_gray_bytes, write_pgm
from core.export.tables import (
    GRADIENT_COLUMNS,
    write_gradient_csv,
    write_grid_csv,
    write_history_csv,
    write_lag_probe_csv,
)
from core.initialization import init_orthogonal_lmn, init_random_lstm
from core.ingestion.synthetic import synthetic_copy_task
from core.laes import fit_laes
from core.models import EpochRecord, GradientPoint, GridRow, LagProbeResult, TrainHistory
from core.training.heads import LaesClassifier, init_ff_head


class TestCheckpointContainer(unittest.TestCase):
    def setUp(self):
        self.tensors = {"rnn.v": np.arange(6.0).reshape(3, 2), "rnn.u": np.eye(3), "rnn.w_o": np.ones((2, 3))}

    def test_layout(self):
        raw = encode_checkpoint({"x.y": np.array([[1.5]])})
        self.assertEqual(raw[:8], MAGIC)
        self.assertEqual(raw[8:16], b"\x01\x00\x00\x00\x01\x00\x00\x00")
        self.assertEqual(raw[16:18], b"\x03\x00")
        self.assertEqual(raw[18:21], b"x.y")
        self.assertEqual(len(raw), 8 + 8 + 2 + 3 + 16 + 8 + 4)

    def test_round_trip_keeps_order_and_values(self):
        decoded = decode_checkpoint(encode_checkpoint(self.tensors))
        self.assertEqual(list(decoded), list(self.tensors))
        for name, arr in self.tensors.items():
            np.testing.assert_array_equal(decoded[name], arr)

    def test_vectors_become_rows(self):
        decoded = decode_checkpoint(encode_checkpoint({"v": np.array([1.0, 2.0])}))
        self.assertEqual(decoded["v"].shape, (1, 2))

    def test_corruption_is_detected(self):
        raw = bytearray(encode_checkpoint(self.tensors))
        raw[30] ^= 0xFF
        with self.assertRaises(CheckpointError):
            decode_checkpoint(bytes(raw))

    def test_bad_magic(self):
        raw = b"NOTACKPT" + encode_checkpoint(self.tensors)[8:]
        with self.assertRaises(CheckpointError):
            decode_checkpoint(raw)

    def test_truncated(self):
        with self.assertRaises(CheckpointError):
            decode_checkpoint(MAGIC + b"\x01")

    def test_file_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "nested", "model.ckpt")
            crc = save_checkpoint(path, self.tensors)
            with open(path, "rb") as handle:
                self.assertEqual(int.from_bytes(handle.read()[-4:], "little"), crc)
            self.assertEqual(list(load_checkpoint(path)), list(self.tensors))

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_checkpoint("/nonexistent/model.ckpt")


class TestModelCheckpoints(unittest.TestCase):
    def setUp(self):
        data = synthetic_copy_task(6, 4, 1, seed=0).batch
        self.laes = fit_laes(data, 3)

    def _round_trip(self, model):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "m.ckpt")
            save_model(path, model)
            return load_model(path)

    def test_recurrent_models(self):
        for params in (init_orthogonal_lmn(4, 1, 2, seed=0, hidden=3), init_random_lstm(3, 2, 4, seed=1)):
            kind, restored = self._round_trip(params)
            self.assertEqual(kind, params.KIND)
            for name, arr in params.tensors().items():
                np.testing.assert_array_equal(restored.tensors()[name], arr)

    def test_laes(self):
        kind, restored = self._round_trip(self.laes)
        self.assertEqual(kind, "laes")
        np.testing.assert_array_equal(restored.b, self.laes.b)
        self.assertIsNone(restored.mean)

    def test_laes_heads(self):
        linear = LaesClassifier(laes=self.laes, head="linear", w=np.ones((2, 3)))
        svm = LaesClassifier(laes=self.laes, head="svm", w=np.full((2, 3), 0.5))
        ff = LaesClassifier(laes=self.laes, head="ff", ff=init_ff_head(3, 4, 2, seed=0))
        for model, expected in ((linear, "laes_linear"), (svm, "laes_svm"), (ff, "laes_ff")):
            kind, restored = self._round_trip(model)
            self.assertEqual(kind, expected)
            self.assertEqual(restored.head, model.head)
        self.assertIn("ff.w1", checkpoint_tensors(ff))

    def test_missing_entries(self):
        tensors = checkpoint_tensors(init_orthogonal_lmn(4, 1, 2, seed=0))
        del tensors["lmn.w_mm"]
        with self.assertRaises(CheckpointError):
            model_from_checkpoint(tensors)
        with self.assertRaises(CheckpointError):
            model_from_checkpoint({"laes.a": self.laes.a})

    def test_inconsistent_shapes(self):
        tensors = checkpoint_tensors(LaesClassifier(laes=self.laes, head="linear", w=np.ones((2, 3))))
        tensors["linear.w"] = np.ones((2, 5))
        with self.assertRaises(CheckpointError):
            model_from_checkpoint(tensors)

    def test_mixed_kinds(self):
        tensors = checkpoint_tensors(init_orthogonal_lmn(4, 1, 2, seed=0))
        tensors.update(checkpoint_tensors(init_random_lstm(3, 1, 2, seed=0)))
        with self.assertRaises(CheckpointError):
            model_from_checkpoint(tensors)


class TestTables(unittest.TestCase):
    def test_headers_and_values(self):
        with tempfile.TemporaryDirectory() as tmp:
            history = TrainHistory(records=[EpochRecord(epoch=1, train_loss=0.5, val_acc=0.25, seconds=1.0)])
            path = os.path.join(tmp, "history.csv")
            write_history_csv(history, path)
            with open(path) as handle:
                self.assertEqual(handle.readline().strip(), "epoch,train_loss,val_acc,seconds")

            path = os.path.join(tmp, "lag.csv")
            write_lag_probe_csv([LagProbeResult(k=1, mse=1 / 3, model_tag="lmn")], path)
            with open(path) as handle:
                self.assertEqual(handle.read(), "k,mse,model_tag\n1,0.333333333,lmn\n")

            path = os.path.join(tmp, "grid.csv")
            write_grid_csv([GridRow(cell_id="c", lr=1e-3, lambda_ortho=0, alpha_act=0, trunc_p=0, status="failed")], path)
            frame = pd.read_csv(path)
            self.assertEqual(frame.loc[0, "status"], "failed")
            self.assertTrue(np.isnan(frame.loc[0, "test_acc"]))

    def test_gradient_stride_keeps_last_row(self):
        curve = [GradientPoint(t=t, grad_norm=1.0) for t in range(10, -1, -1)]
        with tempfile.TemporaryDirectory() as tmp:
            frame = write_gradient_csv(curve, os.path.join(tmp, "g.csv"), stride=4)
        self.assertEqual(list(frame.columns), GRADIENT_COLUMNS)
        self.assertEqual(frame["t"].tolist(), [10, 6, 2, 0])


class TestImages(unittest.TestCase):
    def test_gray_mapping(self):
        np.testing.assert_array_equal(to_gray_bytes(np.array([[-1.0, 0.5, 2.0]])), [[0, 128, 255]])

    def test_pgm_header_and_round_trip(self):
        image = np.array([[0.0, 1.0], [0.5, 0.25]])
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "img.pgm")
            write_pgm(path, image)
            with open(path, "rb") as handle:
                raw = handle.read()
            self.assertTrue(raw.startswith(b"P5"))
            self.assertEqual(raw[-4:], bytes([0, 255, 128, 64]))
            np.testing.assert_allclose(read_pgm(path), to_gray_bytes(image) / 255.0)

    def test_rejects_non_images(self):
        with self.assertRaises(ValueError):
            to_gray_bytes(np.zeros(4))


if __name__ == "__main__":
    unittest.main()
