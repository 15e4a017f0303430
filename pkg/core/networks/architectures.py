"""
Forward dynamics and exact reverse passes for the four recurrent architectures.

All passes run on padded batches: the input is (B, T, d), states are stored as
(T + 1, B, size) with index 0 holding the zero initial state, and a sequence's
states freeze once it has ended, so logits always come from each sequence's
own last step. Readouts consume only the final state.
"""
from abc import ABC, abstractmethod
from typing import ClassVar, Dict, Optional, Tuple, Type

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.special import expit

from core.exceptions import ShapeError
from core.laes.batch import BatchLike, SequenceBatch, as_batch
from core.networks.params import (
    LSTM_GATES,
    LinearRnnParams,
    LmnParams,
    LstmParams,
    ParamBundle,
    RnnParams,
)

Grads = Dict[str, np.ndarray]


class ForwardTrace(BaseModel):
    """Everything a forward pass computed; sufficient for exact BPTT."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: str
    inputs: np.ndarray
    lengths: np.ndarray
    active: np.ndarray
    states: Dict[str, np.ndarray]
    cache: Dict[str, np.ndarray]
    logits: np.ndarray
    probe: str

    @property
    def steps(self) -> int:
        return int(self.inputs.shape[1])

    @property
    def batch_size(self) -> int:
        return int(self.inputs.shape[0])

    def probed_states(self) -> np.ndarray:
        """The state the readout consumes, for steps 1..T, shape (T, B, p)."""
        return self.states[self.probe][1:]

    def final_state(self) -> np.ndarray:
        return self.states[self.probe][-1]

    def sequence_states(self, i: int, name: Optional[str] = None) -> np.ndarray:
        """(T_i, size) states of sequence i."""
        return self.states[name or self.probe][1 : self.lengths[i] + 1, i]


class RecurrentArchitecture(ABC):
    """
    Common interface over the recurrent cells. Concrete classes hold no state;
    one instance per kind lives in the ArchitectureRegistry.
    """

    kind: ClassVar[str]
    params_class: ClassVar[Type[ParamBundle]]
    probe_state: ClassVar[str]
    recurrent_matrices: ClassVar[Tuple[str, ...]]

    @abstractmethod
    def run(self, params, batch: SequenceBatch) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]]:
        """Returns (states, cache) for the batch."""

    @abstractmethod
    def backward(
        self,
        trace: ForwardTrace,
        params,
        dlogits: np.ndarray,
        keep: np.ndarray,
        state_grads: Optional[np.ndarray] = None,
    ) -> Tuple[Grads, np.ndarray]:
        """
        Reverse pass.

        Args:
            trace: Output of forward() with the same params.
            dlogits: dLoss/dlogits, shape (B, c).
            keep: (T, B) multipliers for the nonlinear recurrent edge at each step
                  (1 = propagate, 0 = truncated).
            state_grads: Optional extra dLoss/d(probed state) per step, (T, B, p).

        Returns:
            (parameter gradients keyed like params.tensors(),
             dLoss/d(probed state) for t = 0..T, shape (T + 1, B, p)).
        """

    def forward(self, params, data: BatchLike) -> ForwardTrace:
        if not isinstance(params, self.params_class):
            raise ShapeError(f"{self.kind} forward got {type(params).__name__}")
        batch = as_batch(data)
        if batch.d != params.input_size:
            raise ShapeError(
                f"{self.kind}: sequence feature dim {batch.d} != input size {params.input_size}"
            )
        states, cache = self.run(params, batch)
        logits = states[self.probe_state][-1] @ params.w_o.T
        return ForwardTrace(
            kind=self.kind,
            inputs=batch.inputs,
            lengths=batch.lengths,
            active=batch.active_mask(),
            states=states,
            cache=cache,
            logits=logits,
            probe=self.probe_state,
        )

    @staticmethod
    def _check_trace(trace: ForwardTrace, params, kind: str) -> None:
        if trace.kind != kind:
            raise ShapeError(f"trace from {trace.kind} passed to {kind} backward")
        if trace.inputs.shape[2] != params.input_size:
            raise ShapeError("trace and parameters disagree on input size")


def _freeze(live: np.ndarray, new: np.ndarray, old: np.ndarray) -> np.ndarray:
    return live * new + (1.0 - live) * old


class LinearRnn(RecurrentArchitecture):
    kind = "linear_rnn"
    params_class = LinearRnnParams
    probe_state = "m"
    recurrent_matrices = ("b",)

    def run(self, params: LinearRnnParams, batch: SequenceBatch):
        n, steps, _ = batch.inputs.shape
        active = batch.active_mask()
        m = np.zeros((steps + 1, n, params.state_size))
        for t in range(steps):
            new = batch.inputs[:, t] @ params.a.T + m[t] @ params.b.T
            m[t + 1] = _freeze(active[t][:, None], new, m[t])
        return {"m": m}, {}

    def backward(self, trace, params: LinearRnnParams, dlogits, keep, state_grads=None):
        self._check_trace(trace, params, self.kind)
        x, m = trace.inputs, trace.states["m"]
        grads = {name: np.zeros_like(arr) for name, arr in params.tensors().items()}
        grads["w_o"] = dlogits.T @ m[-1]
        dm = dlogits @ params.w_o
        probe = np.zeros_like(m)
        for t in range(trace.steps, 0, -1):
            if state_grads is not None:
                dm = dm + state_grads[t - 1]
            probe[t] = dm
            live = trace.active[t - 1][:, None]
            dm_live = dm * live
            grads["a"] += dm_live.T @ x[:, t - 1]
            grads["b"] += dm_live.T @ m[t - 1]
            # purely linear recurrence: nothing to truncate
            dm = dm_live @ params.b + (1.0 - live) * dm
        probe[0] = dm
        return grads, probe


class ElmanRnn(RecurrentArchitecture):
    kind = "rnn"
    params_class = RnnParams
    probe_state = "h"
    recurrent_matrices = ("u",)

    def run(self, params: RnnParams, batch: SequenceBatch):
        n, steps, _ = batch.inputs.shape
        active = batch.active_mask()
        h = np.zeros((steps + 1, n, params.state_size))
        for t in range(steps):
            new = np.tanh(batch.inputs[:, t] @ params.v.T + h[t] @ params.u.T)
            h[t + 1] = _freeze(active[t][:, None], new, h[t])
        return {"h": h}, {}

    def backward(self, trace, params: RnnParams, dlogits, keep, state_grads=None):
        self._check_trace(trace, params, self.kind)
        x, h = trace.inputs, trace.states["h"]
        grads = {name: np.zeros_like(arr) for name, arr in params.tensors().items()}
        grads["w_o"] = dlogits.T @ h[-1]
        dh = dlogits @ params.w_o
        probe = np.zeros_like(h)
        for t in range(trace.steps, 0, -1):
            if state_grads is not None:
                dh = dh + state_grads[t - 1]
            probe[t] = dh
            live = trace.active[t - 1][:, None]
            da = dh * live * (1.0 - h[t] ** 2)
            grads["v"] += da.T @ x[:, t - 1]
            grads["u"] += da.T @ h[t - 1]
            dh = keep[t - 1][:, None] * (da @ params.u) + (1.0 - live) * dh
        probe[0] = dh
        return grads, probe


class LinearMemoryNetwork(RecurrentArchitecture):
    kind = "lmn"
    params_class = LmnParams
    probe_state = "m"
    recurrent_matrices = ("w_mm",)

    def run(self, params: LmnParams, batch: SequenceBatch):
        n, steps, _ = batch.inputs.shape
        active = batch.active_mask()
        h = np.zeros((steps + 1, n, params.hidden_size))
        m = np.zeros((steps + 1, n, params.state_size))
        for t in range(steps):
            live = active[t][:, None]
            h_new = np.tanh(batch.inputs[:, t] @ params.w_xh.T + m[t] @ params.w_mh.T)
            m_new = h_new @ params.w_hm.T + m[t] @ params.w_mm.T
            h[t + 1] = _freeze(live, h_new, h[t])
            m[t + 1] = _freeze(live, m_new, m[t])
        return {"h": h, "m": m}, {}

    def backward(self, trace, params: LmnParams, dlogits, keep, state_grads=None):
        self._check_trace(trace, params, self.kind)
        x, h, m = trace.inputs, trace.states["h"], trace.states["m"]
        grads = {name: np.zeros_like(arr) for name, arr in params.tensors().items()}
        grads["w_o"] = dlogits.T @ m[-1]
        dm = dlogits @ params.w_o
        probe = np.zeros_like(m)
        for t in range(trace.steps, 0, -1):
            if state_grads is not None:
                dm = dm + state_grads[t - 1]
            probe[t] = dm
            live = trace.active[t - 1][:, None]
            dm_live = dm * live
            grads["w_hm"] += dm_live.T @ h[t]
            grads["w_mm"] += dm_live.T @ m[t - 1]
            da = (dm_live @ params.w_hm) * (1.0 - h[t] ** 2)
            grads["w_xh"] += da.T @ x[:, t - 1]
            grads["w_mh"] += da.T @ m[t - 1]
            # the memory-to-memory edge is linear and always carries gradient;
            # only the m_{t-1} -> h_t edge is subject to truncation
            dm = (
                dm_live @ params.w_mm
                + keep[t - 1][:, None] * (da @ params.w_mh)
                + (1.0 - live) * dm
            )
        probe[0] = dm
        return grads, probe


class Lstm(RecurrentArchitecture):
    kind = "lstm"
    params_class = LstmParams
    probe_state = "h"
    recurrent_matrices = ()

    def run(self, params: LstmParams, batch: SequenceBatch):
        n, steps, d = batch.inputs.shape
        p = params.state_size
        active = batch.active_mask()
        w, b = params.stacked()
        h = np.zeros((steps + 1, n, p))
        c = np.zeros((steps + 1, n, p))
        gates = np.zeros((steps, n, 4 * p))
        tanh_c = np.zeros((steps, n, p))
        for t in range(steps):
            z = np.hstack([batch.inputs[:, t], h[t]]) @ w.T + b
            i = expit(z[:, :p])
            f = expit(z[:, p : 2 * p])
            g = np.tanh(z[:, 2 * p : 3 * p])
            o = expit(z[:, 3 * p :])
            c_new = f * c[t] + i * g
            tc = np.tanh(c_new)
            live = active[t][:, None]
            c[t + 1] = _freeze(live, c_new, c[t])
            h[t + 1] = _freeze(live, o * tc, h[t])
            gates[t] = np.hstack([i, f, g, o])
            tanh_c[t] = tc
        return {"h": h, "c": c}, {"gates": gates, "tanh_c": tanh_c}

    def backward(self, trace, params: LstmParams, dlogits, keep, state_grads=None):
        self._check_trace(trace, params, self.kind)
        x, h, c = trace.inputs, trace.states["h"], trace.states["c"]
        gates, tanh_c = trace.cache["gates"], trace.cache["tanh_c"]
        d = x.shape[2]
        p = params.state_size
        w, _ = params.stacked()
        dw = np.zeros_like(w)
        db = np.zeros((1, 4 * p))

        grads = {name: np.zeros_like(arr) for name, arr in params.tensors().items()}
        grads["w_o"] = dlogits.T @ h[-1]
        dh = dlogits @ params.w_o
        dc = np.zeros_like(dh)
        probe = np.zeros_like(h)
        for t in range(trace.steps, 0, -1):
            if state_grads is not None:
                dh = dh + state_grads[t - 1]
            probe[t] = dh
            live = trace.active[t - 1][:, None]
            dh_live = dh * live
            dc_live = dc * live
            g_all = gates[t - 1]
            i, f, g, o = (g_all[:, k * p : (k + 1) * p] for k in range(4))
            tc = tanh_c[t - 1]

            d_o = dh_live * tc * o * (1.0 - o)
            dc_total = dc_live + dh_live * o * (1.0 - tc ** 2)
            d_i = dc_total * g * i * (1.0 - i)
            d_g = dc_total * i * (1.0 - g ** 2)
            d_f = dc_total * c[t - 1] * f * (1.0 - f)
            dz = np.hstack([d_i, d_f, d_g, d_o])

            z_in = np.hstack([x[:, t - 1], h[t - 1]])
            dw += dz.T @ z_in
            db += dz.sum(axis=0, keepdims=True)
            dz_in = dz @ w
            # h-path truncation; the cell path c_{t-1} -> c_t always propagates
            dh = keep[t - 1][:, None] * dz_in[:, d:] + (1.0 - live) * dh
            dc = dc_total * f + (1.0 - live) * dc
        probe[0] = dh

        for k, gate in enumerate(LSTM_GATES):
            grads[f"w_{gate}"] = dw[k * p : (k + 1) * p].copy()
            grads[f"b_{gate}"] = db[:, k * p : (k + 1) * p].copy()
        return grads, probe
