import unittest

import numpy as np

from core.exceptions import ShapeError
from core.initialization import init_orthogonal_lmn, init_random_lstm, init_random_rnn
from core.laes import SequenceBatch
from core.networks import LinearRnnParams, forward
from core.training.backprop import (
    bptt_backward,
    clip_global_norm,
    draw_truncation_mask,
    global_norm,
    softmax_cross_entropy,
)

FD_STEP = 1e-5
FD_TOLERANCE = 1e-4


def _random_params(kind, rng, p, d, c):
    seed = int(rng.integers(0, 2**31))
    if kind == "rnn":
        template = init_random_rnn(p, d, c, seed)
    elif kind == "lmn":
        template = init_orthogonal_lmn(p, d, c, seed, hidden=int(rng.integers(1, 6)))
    elif kind == "lstm":
        template = init_random_lstm(p, d, c, seed)
    else:
        template = LinearRnnParams(a=np.zeros((p, d)), b=np.zeros((p, p)), w_o=np.zeros((c, p)))
    tensors = {
        name: 0.6 * rng.standard_normal(arr.shape) / np.sqrt(max(arr.shape[1], 1))
        for name, arr in template.tensors().items()
    }
    return type(template).from_tensors(tensors)


def _random_batch(rng, t_max, d, n=3):
    lengths = rng.integers(1, t_max + 1, size=n)
    lengths[0] = t_max
    return SequenceBatch.from_sequences([rng.standard_normal((int(k), d)) for k in lengths])


def _objective(params, batch, labels, weights):
    """Cross-entropy plus a fixed linear functional of the probed states."""
    trace = forward(params, batch)
    loss, dlogits = softmax_cross_entropy(trace.logits, labels)
    return loss + float(np.sum(weights * trace.probed_states())), trace, dlogits


def _relative_error(analytic, numeric):
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-8)
    return float(np.linalg.norm(analytic - numeric)) / scale


class TestGradientsAgainstFiniteDifferences(unittest.TestCase):
    def _check_kind(self, kind, instances=20):
        rng = np.random.default_rng({"linear_rnn": 1, "rnn": 2, "lmn": 3, "lstm": 4}[kind])
        for _ in range(instances):
            p, d, c = int(rng.integers(1, 6)), int(rng.integers(1, 4)), int(rng.integers(2, 4))
            t_max = int(rng.integers(1, 9))
            params = _random_params(kind, rng, p, d, c)
            batch = _random_batch(rng, t_max, d)
            labels = rng.integers(0, c, size=batch.n)
            weights = 0.3 * rng.standard_normal((t_max, batch.n, p))

            _, trace, dlogits = _objective(params, batch, labels, weights)
            analytic = bptt_backward(trace, params, dlogits, state_grads=weights).grads

            for name, value in params.tensors().items():
                numeric = np.zeros_like(value)
                for idx in np.ndindex(value.shape):
                    shifted = value.copy()
                    shifted[idx] += FD_STEP
                    up = _objective(params.replace(**{name: shifted}), batch, labels, weights)[0]
                    shifted[idx] -= 2 * FD_STEP
                    down = _objective(params.replace(**{name: shifted}), batch, labels, weights)[0]
                    numeric[idx] = (up - down) / (2 * FD_STEP)
                self.assertLessEqual(
                    _relative_error(analytic[name], numeric),
                    FD_TOLERANCE,
                    f"{kind}.{name} p={p} d={d} T={t_max}",
                )

    def test_linear_rnn(self):
        self._check_kind("linear_rnn")

    def test_rnn(self):
        self._check_kind("rnn")

    def test_lmn(self):
        self._check_kind("lmn")

    def test_lstm(self):
        self._check_kind("lstm")


class TestBackpropBehaviour(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(7)
        self.x = rng.standard_normal((2, 6, 2))

    def test_zero_loss_gradient_gives_zero_grads(self):
        params = init_random_lstm(4, 2, 3, seed=0)
        trace = forward(params, self.x)
        result = bptt_backward(trace, params, np.zeros_like(trace.logits))
        for grad in result.grads.values():
            np.testing.assert_array_equal(grad, np.zeros_like(grad))

    def test_full_truncation_on_orthogonal_lmn_keeps_gradient_norm(self):
        params = init_orthogonal_lmn(5, 2, 3, seed=1)
        trace = forward(params, self.x)
        dlogits = np.random.default_rng(0).standard_normal(trace.logits.shape)
        probe = bptt_backward(trace, params, dlogits, trunc_p=1.0).state_grads
        norms = np.linalg.norm(probe, axis=2)
        np.testing.assert_allclose(norms, np.broadcast_to(norms[-1], norms.shape), rtol=1e-10)

    def test_full_truncation_cuts_rnn_gradient_after_one_step(self):
        params = init_random_rnn(4, 2, 3, seed=2)
        trace = forward(params, self.x)
        dlogits = np.ones_like(trace.logits)
        probe = bptt_backward(trace, params, dlogits, trunc_p=1.0).state_grads
        np.testing.assert_array_equal(probe[:-1], np.zeros_like(probe[:-1]))
        self.assertGreater(np.abs(probe[-1]).sum(), 0.0)

    def test_no_truncation_leaves_generator_untouched(self):
        params = init_random_rnn(4, 2, 3, seed=2)
        trace = forward(params, self.x)
        rng = np.random.default_rng(123)
        before = rng.bit_generator.state
        bptt_backward(trace, params, np.ones_like(trace.logits), trunc_p=0.0, rng=rng)
        self.assertEqual(rng.bit_generator.state, before)

    def test_stochastic_truncation_requires_generator(self):
        with self.assertRaises(ValueError):
            draw_truncation_mask(0.5, 3, 2, None)
        with self.assertRaises(ValueError):
            draw_truncation_mask(1.5, 3, 2, np.random.default_rng(0))

    def test_truncation_mask_rate(self):
        mask = draw_truncation_mask(0.25, 400, 50, np.random.default_rng(0))
        self.assertAlmostEqual(float(mask.mean()), 0.75, delta=0.01)
        self.assertTrue(set(np.unique(mask)) <= {0.0, 1.0})

    def test_keep_mask_shape_checked(self):
        params = init_random_rnn(4, 2, 3, seed=2)
        trace = forward(params, self.x)
        with self.assertRaises(ShapeError):
            bptt_backward(trace, params, np.ones_like(trace.logits), keep=np.ones((5, 2)))

    def test_trace_kind_must_match_parameters(self):
        trace = forward(init_random_rnn(4, 2, 3, seed=2), self.x)
        with self.assertRaises(ShapeError):
            bptt_backward(trace, init_random_lstm(4, 2, 3, seed=2), np.ones_like(trace.logits))


class TestLossAndClipping(unittest.TestCase):
    def test_cross_entropy_gradient(self):
        rng = np.random.default_rng(0)
        logits = rng.standard_normal((4, 3))
        labels = np.array([0, 2, 1, 2])
        _, grad = softmax_cross_entropy(logits, labels)
        numeric = np.zeros_like(logits)
        for idx in np.ndindex(logits.shape):
            up, down = logits.copy(), logits.copy()
            up[idx] += FD_STEP
            down[idx] -= FD_STEP
            numeric[idx] = (
                softmax_cross_entropy(up, labels)[0] - softmax_cross_entropy(down, labels)[0]
            ) / (2 * FD_STEP)
        np.testing.assert_allclose(grad, numeric, atol=1e-8)

    def test_cross_entropy_of_uniform_logits(self):
        loss, _ = softmax_cross_entropy(np.zeros((2, 4)), [1, 3])
        self.assertAlmostEqual(loss, np.log(4.0))

    def test_labels_outside_logits(self):
        with self.assertRaises(ShapeError):
            softmax_cross_entropy(np.zeros((2, 3)), [0, 3])

    def test_clip_rescales_to_max_norm(self):
        grads = {"a": np.full((2, 2), 3.0), "b": np.full((1, 1), 4.0)}
        clipped, norm = clip_global_norm(grads, 1.0)
        self.assertAlmostEqual(norm, np.sqrt(4 * 9.0 + 16.0))
        self.assertAlmostEqual(global_norm(clipped), 1.0)

    def test_clip_leaves_small_gradients(self):
        grads = {"a": np.full((1, 1), 0.5)}
        clipped, _ = clip_global_norm(grads, 1.0)
        self.assertIs(clipped, grads)


if __name__ == "__main__":
    unittest.main()
