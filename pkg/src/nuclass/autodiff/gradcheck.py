"""Central finite-difference checks for reverse-mode gradients."""
from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor, backward


def relative_error(analytic, numeric, floor=1e-8):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def gradcheck(fn, arrays, eps=1e-5, n_samples=None, rng=None, roundoff_floor=True):
    """Compare tape gradients of scalar ``fn(*tensors)`` with central differences.

    Checks every element, or ``n_samples`` random elements per input.
    Returns the largest relative error seen. Differences below the roundoff
    resolution of the difference quotient count as zero unless
    ``roundoff_floor`` is off.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = fn(*tensors)
    grads = backward(tape, out, wrt=tensors)
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for t, g in zip(tensors, grads):
        flat = t.data.reshape(-1)
        if n_samples is None or n_samples >= flat.size:
            idx = np.arange(flat.size)
        else:
            idx = rng.choice(flat.size, n_samples, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(fn(*tensors).data)
            flat[i] = orig - eps
            lo = float(fn(*tensors).data)
            flat[i] = orig
            num = (hi - lo) / (2 * eps)
            a = g.reshape(-1)[i]
            resolution = 10 * np.finfo(np.float64).eps * max(abs(hi), abs(lo), 1.0) / eps
            if not roundoff_floor or abs(a - num) > resolution:
                worst = max(worst, float(relative_error(a, num)))
    return worst
