import unittest

import numpy as np

from core.initialization import init_orthogonal_lmn, init_random_lstm, init_random_rnn
from core.laes import SequenceBatch
from core.networks import RnnParams, forward
from core.training.optimizer import AdamState, adam_step
from core.training.penalties import activation_penalty, orthogonality_penalty, penalty_terms

FD_STEP = 1e-6


class TestOrthogonalityPenalty(unittest.TestCase):
    def test_scaled_identity_value(self):
        value, _ = orthogonality_penalty(2.0 * np.eye(2), 1.0)
        self.assertAlmostEqual(value, 18.0)

    def test_orthogonal_matrix_costs_nothing(self):
        q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((4, 4)))
        value, grad = orthogonality_penalty(q, 0.7)
        self.assertAlmostEqual(value, 0.0, places=12)
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_gradient_matches_finite_differences(self):
        w = np.random.default_rng(1).standard_normal((3, 3))
        _, grad = orthogonality_penalty(w, 0.5)
        numeric = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            up, down = w.copy(), w.copy()
            up[idx] += FD_STEP
            down[idx] -= FD_STEP
            numeric[idx] = (orthogonality_penalty(up, 0.5)[0] - orthogonality_penalty(down, 0.5)[0]) / (2 * FD_STEP)
        np.testing.assert_allclose(grad, numeric, rtol=1e-6, atol=1e-6)

    def test_only_recurrent_matrices_are_penalized(self):
        params = init_random_rnn(3, 2, 2, seed=0)
        result = penalty_terms(params, lambda_ortho=1.0, alpha_act=0.0)
        np.testing.assert_array_equal(result.grads["v"], np.zeros_like(params.v))
        np.testing.assert_array_equal(result.grads["w_o"], np.zeros_like(params.w_o))
        self.assertGreater(np.abs(result.grads["u"]).sum(), 0.0)

    def test_lstm_has_no_orthogonality_term(self):
        params = init_random_lstm(3, 2, 2, seed=0)
        result = penalty_terms(params, lambda_ortho=1.0, alpha_act=0.0)
        self.assertEqual(result.loss, 0.0)
        self.assertIsNone(result.state_grads)


class TestActivationPenalty(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(3)
        self.batch = SequenceBatch.from_sequences([rng.standard_normal((5, 2)), rng.standard_normal((3, 2))])
        self.params = init_orthogonal_lmn(3, 2, 2, seed=4)

    def _fd_check(self, act_reg):
        trace = forward(self.params, self.batch)
        _, grad = activation_penalty(trace, 0.8, act_reg)
        states = trace.probed_states()
        numeric = np.zeros_like(states)
        for idx in np.ndindex(states.shape):
            shifted = {}
            for sign in (1.0, -1.0):
                s = trace.states["m"].copy()
                s[(idx[0] + 1,) + idx[1:]] += sign * FD_STEP
                moved = trace.model_copy(update={"states": {**trace.states, "m": s}})
                shifted[sign] = activation_penalty(moved, 0.8, act_reg)[0]
            numeric[idx] = (shifted[1.0] - shifted[-1.0]) / (2 * FD_STEP)
        np.testing.assert_allclose(grad, numeric, atol=1e-6)

    def test_l2_gradient(self):
        self._fd_check("l2")

    def test_norm_stabilizer_gradient(self):
        self._fd_check("norm_stabilizer")

    def test_l2_value_is_length_normalized_mean(self):
        trace = forward(self.params, self.batch)
        loss, _ = activation_penalty(trace, 1.0, "l2")
        expected = np.mean(
            [np.sum(trace.sequence_states(i) ** 2) / self.batch.lengths[i] for i in range(2)]
        )
        self.assertAlmostEqual(loss, expected)

    def test_zero_alpha(self):
        trace = forward(self.params, self.batch)
        loss, grad = activation_penalty(trace, 0.0)
        self.assertEqual(loss, 0.0)
        np.testing.assert_array_equal(grad, np.zeros_like(grad))

    def test_unknown_regularizer(self):
        with self.assertRaises(ValueError):
            activation_penalty(forward(self.params, self.batch), 1.0, "l1")


class TestAdam(unittest.TestCase):
    def _scalar_rnn(self, value):
        return RnnParams(v=np.array([[value]]), u=np.array([[0.0]]), w_o=np.array([[1.0]]))

    def test_first_step_matches_hand_computation(self):
        params = self._scalar_rnn(1.0)
        grads = {"v": np.array([[0.5]]), "u": np.array([[0.0]]), "w_o": np.array([[-2.0]])}
        updated, state = adam_step(params, grads, AdamState.zeros_like(params), lr=0.1)
        # bias correction makes the first step lr * g / (|g| + eps)
        self.assertAlmostEqual(float(updated.v[0, 0]), 1.0 - 0.1 * 0.5 / (0.5 + 1e-8))
        self.assertAlmostEqual(float(updated.w_o[0, 0]), 1.0 + 0.1 * 2.0 / (2.0 + 1e-8))
        self.assertEqual(float(updated.u[0, 0]), 0.0)
        self.assertEqual(state.step, 1)
        self.assertAlmostEqual(float(state.m["v"][0, 0]), 0.05)
        self.assertAlmostEqual(float(state.v["v"][0, 0]), 0.001 * 0.25)

    def test_second_step(self):
        params = self._scalar_rnn(0.0)
        g = {"v": np.array([[1.0]]), "u": np.array([[0.0]]), "w_o": np.array([[0.0]])}
        params, state = adam_step(params, g, AdamState.zeros_like(params), lr=0.01)
        params, state = adam_step(params, g, state, lr=0.01)
        m = 0.9 * 0.1 + 0.1
        v = 0.999 * 0.001 + 0.001
        step = 0.01 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
        self.assertAlmostEqual(float(params.v[0, 0]), -0.01 / (1 + 1e-8) - step)

    def test_zero_gradients_leave_parameters(self):
        params = init_random_rnn(3, 2, 2, seed=0)
        zeros = {name: np.zeros_like(arr) for name, arr in params.tensors().items()}
        updated, _ = adam_step(params, zeros, AdamState.zeros_like(params), lr=0.1)
        for name, arr in params.tensors().items():
            np.testing.assert_array_equal(updated.tensors()[name], arr)

    def test_inputs_are_not_mutated(self):
        params = init_random_rnn(3, 2, 2, seed=0)
        before = {name: arr.copy() for name, arr in params.tensors().items()}
        grads = {name: np.ones_like(arr) for name, arr in params.tensors().items()}
        state = AdamState.zeros_like(params)
        adam_step(params, grads, state, lr=0.1)
        for name, arr in params.tensors().items():
            np.testing.assert_array_equal(arr, before[name])
        self.assertEqual(state.step, 0)


if __name__ == "__main__":
    unittest.main()
