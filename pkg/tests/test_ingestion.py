import gzip
import json
import os
import struct
import tempfile
import unittest

import numpy as np

from core.exceptions import DatasetError, IdxFormatError, ShapeError
from core.ingestion.idx_reader import IMAGES_MAGIC, LABELS_MAGIC, load_idx, read_idx
from core.ingestion.sequences import (
    LabeledSequences,
    fixed_permutation,
    load_mnist_split,
    make_sequences,
    pixel_streams,
    split,
    stratified_indices,
)
from core.ingestion.synthetic import synthetic_copy_task, synthetic_splits
from core.laes import SequenceBatch

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def idx_bytes(array: np.ndarray, magic: int) -> bytes:
    header = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    return header + np.asarray(array, dtype=np.uint8).tobytes()


def write_mnist_like(directory: str, images: np.ndarray, labels: np.ndarray, prefix: str, compress: bool = False):
    paths = []
    for array, magic, suffix in ((images, IMAGES_MAGIC, "images"), (labels, LABELS_MAGIC, "labels")):
        raw = idx_bytes(array, magic)
        path = os.path.join(directory, f"{prefix}-{suffix}-idx{3 if suffix == 'images' else 1}-ubyte")
        if compress:
            raw, path = gzip.compress(raw), path + ".gz"
        with open(path, "wb") as handle:
            handle.write(raw)
        paths.append(path)
    return paths


class TestIdxReader(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        rng = np.random.default_rng(0)
        self.images = rng.integers(0, 256, size=(5, 3, 4), dtype=np.uint8)
        self.labels = np.array([0, 1, 2, 1, 0], dtype=np.uint8)

    def tearDown(self):
        self.tmp.cleanup()

    def _write(self, name, raw):
        path = os.path.join(self.tmp.name, name)
        with open(path, "wb") as handle:
            handle.write(raw)
        return path

    def test_plain_and_gzip_files(self):
        for compress in (False, True):
            images_path, labels_path = write_mnist_like(self.tmp.name, self.images, self.labels, f"c{compress}", compress)
            images, labels = load_idx(images_path, labels_path)
            np.testing.assert_array_equal(images, self.images)
            np.testing.assert_array_equal(labels, self.labels)

    def test_bad_magic(self):
        path = self._write("bad", idx_bytes(self.labels, 0x00000802))
        with self.assertRaises(IdxFormatError) as ctx:
            read_idx(path, LABELS_MAGIC)
        self.assertEqual(ctx.exception.offset, 0)
        self.assertEqual(ctx.exception.path, path)

    def test_truncated_payload(self):
        raw = idx_bytes(self.images, IMAGES_MAGIC)[:-7]
        path = self._write("short", raw)
        with self.assertRaises(IdxFormatError) as ctx:
            read_idx(path, IMAGES_MAGIC)
        self.assertEqual(ctx.exception.offset, len(raw))

    def test_truncated_header(self):
        path = self._write("header", struct.pack(">II", IMAGES_MAGIC, 5))
        with self.assertRaises(IdxFormatError):
            read_idx(path, IMAGES_MAGIC)

    def test_trailing_bytes_only_warn(self):
        path = self._write("trail", idx_bytes(self.labels, LABELS_MAGIC) + b"\x00\x00")
        with self.assertLogs("core.ingestion.idx_reader", level="WARNING"):
            np.testing.assert_array_equal(read_idx(path, LABELS_MAGIC), self.labels)

    def test_count_mismatch(self):
        images_path, _ = write_mnist_like(self.tmp.name, self.images, self.labels, "a")
        _, labels_path = write_mnist_like(self.tmp.name, self.images, self.labels[:4], "b")
        with self.assertRaises(DatasetError):
            load_idx(images_path, labels_path)

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            read_idx(os.path.join(self.tmp.name, "absent"), IMAGES_MAGIC)


class TestPixelSequences(unittest.TestCase):
    def setUp(self):
        # pixels a, b, c, d
        self.images = np.array([[[0, 51], [102, 255]]], dtype=np.uint8)

    def test_row_major_scan(self):
        data = make_sequences(self.images, [3])
        np.testing.assert_allclose(data.batch.inputs[0, :, 0], [0.0, 0.2, 0.4, 1.0])
        self.assertEqual(data.batch.d, 1)

    def test_permutation_picks_pixel_per_step(self):
        data = make_sequences(self.images, [3], permutation=(3, 0, 2, 1))
        np.testing.assert_allclose(data.batch.inputs[0, :, 0], [1.0, 0.0, 0.4, 0.2])

    def test_downsampling_averages_blocks(self):
        np.testing.assert_allclose(pixel_streams(self.images, downsample=2), [[0.4]])

    def test_centering(self):
        data = make_sequences(self.images, [3], scale="centered")
        values = data.batch.inputs.ravel()
        self.assertAlmostEqual(values.mean(), 0.0)
        self.assertAlmostEqual(values.std(), 1.0)

    def test_wrong_permutation_length(self):
        with self.assertRaises(ShapeError):
            make_sequences(self.images, [3], permutation=(0, 1, 2))

    def test_unknown_scale(self):
        with self.assertRaises(ValueError):
            make_sequences(self.images, [3], scale="minmax")


class TestFixedPermutation(unittest.TestCase):
    def test_golden_values(self):
        with open(os.path.join(FIXTURES, "permutation_golden.json")) as handle:
            golden = json.load(handle)
        perm = fixed_permutation(golden["n"], golden["seed"])
        self.assertEqual(perm[:5].tolist(), [557, 75, 478, 361, 638])
        self.assertEqual(perm.tolist(), golden["permutation"])

    def test_small_permutation(self):
        self.assertEqual(fixed_permutation(10, 7).tolist(), [8, 1, 5, 9, 0, 4, 3, 2, 6, 7])

    def test_is_a_permutation(self):
        self.assertEqual(sorted(fixed_permutation(50, 1).tolist()), list(range(50)))


class TestSplits(unittest.TestCase):
    def test_class_quotas(self):
        labels = np.array([0] * 6 + [1] * 4)
        train_idx, val_idx = stratified_indices(labels, 5, seed=0)
        self.assertEqual(np.bincount(labels[val_idx]).tolist(), [3, 2])
        self.assertEqual(sorted(np.concatenate([train_idx, val_idx]).tolist()), list(range(10)))

    def test_largest_remainder(self):
        labels = np.array([0] * 5 + [1] * 3 + [2] * 2)
        _, val_idx = stratified_indices(labels, 3, seed=1)
        # exact shares 1.5, 0.9, 0.6
        self.assertEqual(np.bincount(labels[val_idx], minlength=3).tolist(), [1, 1, 1])

    def test_validation_keeps_class_balance(self):
        labels = np.random.default_rng(0).choice(10, size=12000, p=np.linspace(1, 2, 10) / 15.0)
        _, val_idx = stratified_indices(labels, 2000, seed=4)
        source = np.bincount(labels, minlength=10) / labels.size
        val = np.bincount(labels[val_idx], minlength=10) / val_idx.size
        self.assertEqual(val_idx.size, 2000)
        self.assertLessEqual(float(np.max(np.abs(val - source))), 0.02)

    def test_seeded(self):
        labels = np.arange(40) % 4
        a = stratified_indices(labels, 8, seed=3)[1]
        b = stratified_indices(labels, 8, seed=3)[1]
        np.testing.assert_array_equal(a, b)

    def test_zero_validation(self):
        data = synthetic_copy_task(6, 3, 1, seed=0)
        train, val = split(data, 0, seed=0)
        self.assertIsNone(val)
        self.assertEqual(len(train), 6)

    def test_validation_must_leave_training_data(self):
        with self.assertRaises(DatasetError):
            stratified_indices([0, 1, 0], 3, seed=0)

    def test_empty_take(self):
        with self.assertRaises(DatasetError):
            synthetic_copy_task(3, 2, 1, seed=0).take([])

    def test_labels_must_fit_classes(self):
        with self.assertRaises(DatasetError):
            LabeledSequences(batch=SequenceBatch.from_array(np.zeros((2, 3, 1))), labels=np.array([0, 2]), n_classes=2)


class TestMnistSplit(unittest.TestCase):
    def test_load_split(self):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, size=(30, 4, 4), dtype=np.uint8)
        labels = (np.arange(30) % 10).astype(np.uint8)
        with tempfile.TemporaryDirectory() as tmp:
            train = write_mnist_like(tmp, images, labels, "train")
            test = write_mnist_like(tmp, images[:7], labels[:7], "t10k")
            splits = load_mnist_split(
                *train, *test, permuted=True, train_count=20, val_count=10, scale="centered", permutation_seed=2020
            )
        self.assertEqual((len(splits.train), len(splits.val), len(splits.test)), (10, 10, 7))
        self.assertEqual(splits.permutation.tolist(), fixed_permutation(16, 2020).tolist())
        self.assertEqual(splits.train.batch.t_max, 16)
        values = splits.train.batch.inputs.ravel()
        self.assertAlmostEqual(values.mean(), 0.0)
        self.assertAlmostEqual(values.std(), 1.0)
        self.assertIsNotNone(splits.pixel_std)


class TestSyntheticTask(unittest.TestCase):
    def test_labels_follow_first_input(self):
        data = synthetic_copy_task(50, 5, 2, seed=0, margin=0.5, scale=2.0)
        first = data.batch.inputs[:, 0, 0]
        np.testing.assert_array_equal(data.labels, (first > 0).astype(int))
        self.assertTrue(np.all(np.abs(first) >= 1.0))

    def test_splits_are_independent_draws(self):
        splits = synthetic_splits(10, 5, 4, 1, seed=3)
        self.assertEqual((len(splits.train), len(splits.val), len(splits.test)), (10, 5, 5))
        self.assertFalse(np.allclose(splits.val.batch.inputs, splits.test.batch.inputs))


if __name__ == "__main__":
    unittest.main()
