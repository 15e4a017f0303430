"""
Parameter bundles for the recurrent architectures.

Every bundle is an immutable pydantic model whose fields are 2-D float64
arrays (biases are 1 x n rows). `tensors()` exposes them as an ordered dict,
which is the currency of the optimizer, the gradient code and checkpoints.
"""
from typing import ClassVar, Dict, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from core.exceptions import ShapeError


class ParamBundle(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    KIND: ClassVar[str] = ""

    @model_validator(mode="after")
    def _validate(self) -> "ParamBundle":
        for name, arr in self.tensors().items():
            if not isinstance(arr, np.ndarray) or arr.ndim != 2:
                raise ShapeError(f"{self.KIND}.{name} must be a 2-D array")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{self.KIND}.{name} has non-finite entries")
        self._check_shapes()
        return self

    def _check_shapes(self) -> None:
        pass

    @classmethod
    def tensor_names(cls) -> Tuple[str, ...]:
        return tuple(cls.model_fields.keys())

    def tensors(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.tensor_names()}

    @classmethod
    def from_tensors(cls, tensors: Dict[str, np.ndarray]):
        missing = [name for name in cls.tensor_names() if name not in tensors]
        if missing:
            raise ShapeError(f"{cls.KIND} parameters missing {missing}")
        return cls(**{name: np.asarray(tensors[name], dtype=np.float64) for name in cls.tensor_names()})

    def replace(self, **updates: np.ndarray):
        """Copy with some tensors swapped; validated like a fresh bundle."""
        merged = self.tensors()
        merged.update(updates)
        return type(self)(**merged)

    @property
    def n_classes(self) -> int:
        return int(self.w_o.shape[0])

    def _expect(self, name: str, shape: Tuple[int, int]) -> None:
        actual = getattr(self, name).shape
        if actual != shape:
            raise ShapeError(f"{self.KIND}.{name} should be {shape}, got {actual}")


class LinearRnnParams(ParamBundle):
    """m_t = A x_t + B m_{t-1},  y = W_o m_T."""

    KIND: ClassVar[str] = "linear_rnn"

    a: np.ndarray
    b: np.ndarray
    w_o: np.ndarray

    def _check_shapes(self) -> None:
        p, d = self.a.shape
        self._expect("b", (p, p))
        self._expect("w_o", (self.w_o.shape[0], p))

    @property
    def input_size(self) -> int:
        return int(self.a.shape[1])

    @property
    def state_size(self) -> int:
        return int(self.a.shape[0])


class RnnParams(ParamBundle):
    """Elman RNN: h_t = tanh(V x_t + U h_{t-1}),  y = W_o h_T."""

    KIND: ClassVar[str] = "rnn"

    v: np.ndarray
    u: np.ndarray
    w_o: np.ndarray

    def _check_shapes(self) -> None:
        p, _ = self.v.shape
        self._expect("u", (p, p))
        self._expect("w_o", (self.w_o.shape[0], p))

    @property
    def input_size(self) -> int:
        return int(self.v.shape[1])

    @property
    def state_size(self) -> int:
        return int(self.v.shape[0])


class LmnParams(ParamBundle):
    """
    Linear Memory Network:
        h_t = tanh(W_xh x_t + W_mh m_{t-1})
        m_t = W_hm h_t + W_mm m_{t-1}
        y   = W_o m_T
    """

    KIND: ClassVar[str] = "lmn"

    w_xh: np.ndarray
    w_mh: np.ndarray
    w_hm: np.ndarray
    w_mm: np.ndarray
    w_o: np.ndarray

    def _check_shapes(self) -> None:
        p_h, _ = self.w_xh.shape
        p_m = self.w_mm.shape[0]
        self._expect("w_mh", (p_h, p_m))
        self._expect("w_hm", (p_m, p_h))
        self._expect("w_mm", (p_m, p_m))
        self._expect("w_o", (self.w_o.shape[0], p_m))

    @property
    def input_size(self) -> int:
        return int(self.w_xh.shape[1])

    @property
    def hidden_size(self) -> int:
        return int(self.w_xh.shape[0])

    @property
    def state_size(self) -> int:
        return int(self.w_mm.shape[0])


LSTM_GATES = ("input_gate", "forget_gate", "cell", "output_gate")


class LstmParams(ParamBundle):
    """Single-layer LSTM; each gate reads [x_t, h_{t-1}] through a p x (d + p) matrix plus a bias row."""

    KIND: ClassVar[str] = "lstm"

    w_input_gate: np.ndarray
    w_forget_gate: np.ndarray
    w_cell: np.ndarray
    w_output_gate: np.ndarray
    b_input_gate: np.ndarray
    b_forget_gate: np.ndarray
    b_cell: np.ndarray
    b_output_gate: np.ndarray
    w_o: np.ndarray

    def _check_shapes(self) -> None:
        p, width = self.w_input_gate.shape
        if width <= p:
            raise ShapeError(f"lstm gate matrices must be p x (d + p), got {self.w_input_gate.shape}")
        for gate in LSTM_GATES:
            self._expect(f"w_{gate}", (p, width))
            self._expect(f"b_{gate}", (1, p))
        self._expect("w_o", (self.w_o.shape[0], p))

    @property
    def input_size(self) -> int:
        return int(self.w_input_gate.shape[1] - self.w_input_gate.shape[0])

    @property
    def state_size(self) -> int:
        return int(self.w_input_gate.shape[0])

    def stacked(self) -> Tuple[np.ndarray, np.ndarray]:
        """Gate weights stacked as (4p, d + p) and biases as (1, 4p), in LSTM_GATES order."""
        w = np.vstack([getattr(self, f"w_{g}") for g in LSTM_GATES])
        b = np.hstack([getattr(self, f"b_{g}") for g in LSTM_GATES])
        return w, b
