"""Differentiable primitives used by the Siamese CNN."""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, record


class ConfigError(ValueError):
    """Layer hyperparameters are inconsistent with their inputs."""


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and reductions


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return record(a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return record(a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)), "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return record(ad * bd, (a, b),
                  lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
                  "mul")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")
    ad, bd = a.data, b.data
    return record(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


def sum_all(x):
    x = as_tensor(x)
    shape = x.shape
    return record(np.asarray(x.data.sum()), (x,),
                  lambda g: (np.broadcast_to(g, shape).copy(),), "sum")


def mean_all(x):
    x = as_tensor(x)
    shape, n = x.shape, x.size
    return record(np.asarray(x.data.mean()), (x,),
                  lambda g: (np.broadcast_to(g / n, shape).copy(),), "mean")


def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    return record(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def take(x, start, stop):
    """Slice ``x[start:stop]`` along the leading axis."""
    x = as_tensor(x)
    shape = x.shape

    def vjp(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[start:stop] = g
        return (full,)

    return record(x.data[start:stop], (x,), vjp, "take")


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(tensors)))

    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"cannot concatenate shapes {[t.shape for t in tensors]}") from exc
    return record(out, tuple(tensors), vjp, "concat")


# ---------------------------------------------------------------------------
# activations; kinks take the left-continuous subgradient 0


def relu6(x):
    x = as_tensor(x)
    v = x.data
    mask = (v > 0) & (v < 6)
    return record(np.clip(v, 0.0, 6.0), (x,), lambda g: (g * mask,), "relu6")


def hard_swish(x):
    x = as_tensor(x)
    v = x.data
    inner = np.clip(v + 3.0, 0.0, 6.0)
    slope = np.where((v > -3) & (v < 3), (2.0 * v + 3.0) / 6.0, 0.0)
    slope = np.where(v >= 3, 1.0, slope)
    return record(v * inner / 6.0, (x,), lambda g: (g * slope,), "hard_swish")


def _sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x):
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return record(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


ACTIVATIONS = {"relu6": relu6, "hard_swish": hard_swish}


def dropout(x, rate, rng, training=True):
    """Inverted dropout; identity when not training or rate == 0."""
    x = as_tensor(x)
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return record(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


# ---------------------------------------------------------------------------
# dense layers and pooling


def dense(x, weight, bias=None):
    """``x @ weight + bias`` for x of shape (N, in) and weight (in, out)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"dense input {x.shape} does not match weight {weight.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd
    if bias is None:
        return record(out, (x, weight), lambda g: (g @ wd.T, xd.T @ g), "dense")
    bias = as_tensor(bias)
    return record(out + bias.data, (x, weight, bias),
                  lambda g: (g @ wd.T, xd.T @ g, g.sum(axis=0)), "dense")


def global_avg_pool(x):
    """(N, C, H, W) -> (N, C)."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects NCHW, got {x.shape}")
    n, c, h, w = x.shape

    def vjp(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), (n, c, h, w)).copy(),)

    return record(x.data.mean(axis=(2, 3)), (x,), vjp, "gap")


def scale_channels(x, gate):
    """Multiply NCHW features by an (N, C) gate."""
    x, gate = as_tensor(x), as_tensor(gate)
    if gate.shape != x.shape[:2]:
        raise ShapeError(f"gate {gate.shape} does not match features {x.shape}")
    xd, gd = x.data, gate.data
    return record(xd * gd[:, :, None, None], (x, gate),
                  lambda g: (g * gd[:, :, None, None], (g * xd).sum(axis=(2, 3))),
                  "scale_channels")


def se_block(x, w_reduce, b_reduce, w_expand, b_expand):
    """Squeeze-and-excitation gating.

    Channel means pass through a ReLU6 bottleneck (C -> C/r) and a sigmoid
    expansion (C/r -> C); the result rescales each input channel.
    """
    x = as_tensor(x)
    c = x.shape[1]
    if w_reduce.shape[0] != c or w_expand.shape[1] != c:
        raise ConfigError(f"SE weights {w_reduce.shape}/{w_expand.shape} do not fit {c} channels")
    squeezed = global_avg_pool(x)
    hidden = relu6(dense(squeezed, w_reduce, b_reduce))
    gate = sigmoid(dense(hidden, w_expand, b_expand))
    return scale_channels(x, gate)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean over the batch of -log softmax(logits)[label]."""
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (N, K), got {logits.shape}")
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.dtype.kind not in "iu" or labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must be integers in [0, {k - 1}]")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = np.mean(logsum - z[rows, labels])
    probs = np.exp(z - logsum[:, None])

    def vjp(g):
        d = probs.copy()
        d[rows, labels] -= 1.0
        return (g * d / n,)

    return record(np.asarray(loss), (logits,), vjp, "softmax_ce")


# ---------------------------------------------------------------------------
# convolution


def conv_output_size(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def _strided(xp, i, j, ho, wo, stride):
    return xp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride]


def _strided_nhwc(xp, i, j, ho, wo, stride):
    return xp[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride, :]


def _pad(x, padding):
    if not padding:
        return x
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
    xp[:, :, padding:padding + h, padding:padding + w] = x
    return xp


def _im2col(x, kh, kw, stride, padding, ho, wo):
    xp = _pad(x, padding)
    n, c = x.shape[:2]
    cols = np.empty((n, c, kh * kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i * kw + j] = _strided(xp, i, j, ho, wo, stride)
    return cols.reshape(n, c * kh * kw, ho * wo)


def _col2im(dcols, x_shape, kh, kw, stride, padding, ho, wo):
    n, c, h, w = x_shape
    dcols = dcols.reshape(n, c, kh * kw, ho, wo)
    dxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            _strided(dxp, i, j, ho, wo, stride)[...] += dcols[:, :, i * kw + j]
    return dxp[:, :, padding:padding + h, padding:padding + w] if padding else dxp


class _Conv:
    """Forward result plus whatever the backward pass needs.

    Three kernels: 1x1 pointwise (batched matmul), depthwise (shifted
    multiply-accumulate in NHWC so the channel axis is contiguous) and a
    general im2col + matmul path, applied per group when groups > 1.
    """

    def __init__(self, x, k, stride, padding, groups):
        self.x_shape = x.shape
        self.k = k
        self.stride, self.padding, self.groups = stride, padding, groups
        n, c, h, w = x.shape
        o, cg, kh, kw = k.shape
        self.ho = conv_output_size(h, kh, stride, padding)
        self.wo = conv_output_size(w, kw, stride, padding)
        if kh == 1 and kw == 1 and stride == 1 and padding == 0 and groups == 1:
            self.kind = "pointwise"
            self.x2 = x.reshape(n, c, h * w)
            self.out = np.matmul(k[:, :, 0, 0], self.x2).reshape(n, o, h, w)
        elif groups == c and cg == 1 and o == c:
            self.kind = "depthwise"
            xt = np.zeros((n, h + 2 * padding, w + 2 * padding, c), dtype=np.result_type(x, k))
            xt[:, padding:padding + h, padding:padding + w, :] = x.transpose(0, 2, 3, 1)
            self.xt = xt
            out = np.zeros((n, self.ho, self.wo, c), dtype=xt.dtype)
            for i in range(kh):
                for j in range(kw):
                    out += _strided_nhwc(xt, i, j, self.ho, self.wo, stride) * k[:, 0, i, j]
            self.out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
        else:
            self.kind = "im2col"
            og = o // groups
            self.cols = []
            outs = []
            for gi in range(groups):
                cols = _im2col(x[:, gi * cg:(gi + 1) * cg], kh, kw, stride, padding, self.ho, self.wo)
                self.cols.append(cols)
                k2 = k[gi * og:(gi + 1) * og].reshape(og, cg * kh * kw)
                outs.append(np.matmul(k2, cols).reshape(n, og, self.ho, self.wo))
            self.out = outs[0] if groups == 1 else np.concatenate(outs, axis=1)

    def backward(self, g):
        k = self.k
        n, c, h, w = self.x_shape
        o, cg, kh, kw = k.shape
        ho, wo, stride, padding = self.ho, self.wo, self.stride, self.padding
        if self.kind == "pointwise":
            g2 = g.reshape(n, o, h * w)
            dk = np.tensordot(g2, self.x2, axes=([0, 2], [0, 2]))[:, :, None, None]
            dx = np.matmul(k[:, :, 0, 0].T, g2).reshape(n, c, h, w)
            return dx, dk
        if self.kind == "depthwise":
            gt = np.ascontiguousarray(g.transpose(0, 2, 3, 1))
            dxt = np.zeros_like(self.xt)
            dk = np.zeros(k.shape, dtype=self.xt.dtype)
            for i in range(kh):
                for j in range(kw):
                    dk[:, 0, i, j] = np.einsum(
                        "nhwc,nhwc->c", gt, _strided_nhwc(self.xt, i, j, ho, wo, stride))
                    _strided_nhwc(dxt, i, j, ho, wo, stride)[...] += gt * k[:, 0, i, j]
            dx = dxt[:, padding:padding + h, padding:padding + w, :].transpose(0, 3, 1, 2)
            return np.ascontiguousarray(dx), dk
        og = o // self.groups
        dk = np.empty(k.shape, dtype=np.result_type(g, k))
        dxs = []
        for gi in range(self.groups):
            g2 = g[:, gi * og:(gi + 1) * og].reshape(n, og, ho * wo)
            cols = self.cols[gi]
            dk[gi * og:(gi + 1) * og] = np.tensordot(
                g2, cols, axes=([0, 2], [0, 2])).reshape(og, cg, kh, kw)
            k2 = k[gi * og:(gi + 1) * og].reshape(og, cg * kh * kw)
            dcols = np.matmul(k2.T, g2)
            dxs.append(_col2im(dcols, (n, cg, h, w), kh, kw, stride, padding, ho, wo))
        dx = dxs[0] if self.groups == 1 else np.concatenate(dxs, axis=1)
        return dx, dk


def conv2d(x, kernel, bias=None, stride=1, padding=0, groups=1):
    """2-D cross-correlation of NCHW input with an OIHW kernel.

    ``groups`` must divide both channel counts; ``groups == C`` with one
    input channel per group gives a depthwise convolution.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects NCHW input and OIHW kernel, got {x.shape} and {kernel.shape}")
    if stride < 1 or padding < 0:
        raise ConfigError(f"invalid stride {stride} / padding {padding}")
    n, c, h, w = x.shape
    o, cg, kh, kw = kernel.shape
    if groups < 1 or c % groups or o % groups or cg * groups != c:
        raise ShapeError(f"conv2d input {x.shape} incompatible with kernel {kernel.shape} "
                         f"at groups={groups}")
    if conv_output_size(h, kh, stride, padding) < 1 or conv_output_size(w, kw, stride, padding) < 1:
        raise ShapeError(f"kernel {kernel.shape} larger than padded input {x.shape}")
    conv = _Conv(x.data, kernel.data, stride, padding, groups)
    if bias is None:
        return record(conv.out, (x, kernel), conv.backward, "conv2d")
    bias = as_tensor(bias)
    if bias.shape != (o,):
        raise ShapeError(f"bias shape {bias.shape} does not match {o} output channels")

    def vjp(g):
        dx, dk = conv.backward(g)
        return dx, dk, g.sum(axis=(0, 2, 3))

    return record(conv.out + bias.data[None, :, None, None], (x, kernel, bias), vjp, "conv2d")


def conv2d_direct(x, kernel, bias=None, stride=1, padding=0, groups=1):
    """Naive loop convolution on raw arrays; the correctness reference."""
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    n, c, h, w = x.shape
    o, cg, kh, kw = kernel.shape
    og = o // groups
    ho, wo = conv_output_size(h, kh, stride, padding), conv_output_size(w, kw, stride, padding)
    xp = np.zeros((n, c, h + 2 * padding, w + 2 * padding))
    xp[:, :, padding:padding + h, padding:padding + w] = x
    out = np.zeros((n, o, ho, wo))
    for b in range(n):
        for oc in range(o):
            g = oc // og
            for r in range(ho):
                for s in range(wo):
                    acc = 0.0
                    for ic in range(cg):
                        for i in range(kh):
                            for j in range(kw):
                                acc += (xp[b, g * cg + ic, r * stride + i, s * stride + j]
                                        * kernel[oc, ic, i, j])
                    out[b, oc, r, s] = acc
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64)[None, :, None, None]
    return out
