from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state: AdamState):
    """Apply one bias-corrected Adam update in place.

    ``params`` are Tensors (or arrays); ``grads`` are arrays in the same
    order. Moment buffers are created lazily on the first call.
    """
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(_data(p)) for p in params]
        state.v = [np.zeros_like(_data(p)) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        arr = _data(p)
        if g.shape != arr.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {arr.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        arr -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def _data(p):
    return p.data if hasattr(p, "data") and not isinstance(p, np.ndarray) else p
