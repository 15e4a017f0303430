from typing import Dict, Tuple, TypeVar

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from core.exceptions import ShapeError
from core.networks import ParamBundle

P = TypeVar("P", bound=ParamBundle)


class AdamState(BaseModel):
    """First/second moment accumulators keyed like the parameter tensors."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = Field(0, ge=0)

    @classmethod
    def zeros_like(cls, params: ParamBundle) -> "AdamState":
        tensors = params.tensors()
        return cls(
            m={name: np.zeros_like(arr) for name, arr in tensors.items()},
            v={name: np.zeros_like(arr) for name, arr in tensors.items()},
        )


def adam_step(
    params: P,
    grads: Dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Tuple[P, AdamState]:
    """One bias-corrected Adam update; returns new (params, state) and leaves the inputs untouched."""
    tensors = params.tensors()
    if set(grads) != set(tensors):
        raise ShapeError(f"gradient keys {sorted(grads)} != parameter keys {sorted(tensors)}")
    step = state.step + 1
    correction1 = 1.0 - beta1 ** step
    correction2 = 1.0 - beta2 ** step

    updated, new_m, new_v = {}, {}, {}
    for name, value in tensors.items():
        g = grads[name]
        if g.shape != value.shape or state.m[name].shape != value.shape:
            raise ShapeError(f"{name}: gradient {g.shape} / moment {state.m[name].shape} vs {value.shape}")
        m = beta1 * state.m[name] + (1.0 - beta1) * g
        v = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        updated[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
    return params.replace(**updated), AdamState(m=new_m, v=new_v, step=step)
