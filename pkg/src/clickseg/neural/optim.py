"""Adam with decoupled weight decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInputError
from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 3e-3
    weight_decay: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState) -> None:
    """One update in place. Weight decay is decoupled: parameters shrink by
    lr*wd*p before the bias-corrected moment update."""
    if len(params) != len(grads):
        raise InvalidInputError("params/grads length mismatch")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise InvalidInputError("optimizer state tracks a different parameter list")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        g = np.asarray(g)
        if g.shape != p.data.shape:
            raise InvalidInputError(f"gradient shape {g.shape} != parameter {p.data.shape}")
        if m.shape != p.data.shape:
            raise InvalidInputError("moment buffer shape mismatch")
        if state.weight_decay:
            p.data -= state.lr * state.weight_decay * p.data
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / c1
        vhat = v / c2
        p.data -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
