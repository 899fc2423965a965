"""Siamese dual-view CNN built on the autodiff primitives."""
from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import ShapeError
from .config import ModelConfig, StageSpec


def _block_layout(prefix, c_in, spec: StageSpec, se_reduction):
    """(name, shape, fan_in) triples for one inverted residual block."""
    hidden = c_in * spec.expansion
    out = []
    if spec.expansion != 1:
        out += [(f"{prefix}.expand.weight", (hidden, c_in, 1, 1), c_in),
                (f"{prefix}.expand.bias", (hidden,), None)]
    k = spec.kernel
    out += [(f"{prefix}.dw.weight", (hidden, 1, k, k), k * k),
            (f"{prefix}.dw.bias", (hidden,), None)]
    if spec.se:
        r = hidden // se_reduction
        out += [(f"{prefix}.se.reduce.weight", (hidden, r), hidden),
                (f"{prefix}.se.reduce.bias", (r,), None),
                (f"{prefix}.se.expand.weight", (r, hidden), r),
                (f"{prefix}.se.expand.bias", (hidden,), None)]
    out += [(f"{prefix}.project.weight", (spec.out_channels, hidden, 1, 1), hidden),
            (f"{prefix}.project.bias", (spec.out_channels,), None)]
    return out


def _branch_layout(prefix, config: ModelConfig):
    k, c = config.stem_kernel, config.stem_channels
    out = [(f"{prefix}.stem.weight", (c, 1, k, k), k * k),
           (f"{prefix}.stem.bias", (c,), None)]
    for i, spec in enumerate(config.branch_stages):
        out += _block_layout(f"{prefix}.s{i}", c, spec, config.se_reduction)
        c = spec.out_channels
    return out, c


def parameter_layout(config: ModelConfig):
    """Ordered (name, shape, fan_in) for every parameter; fan_in None marks a bias."""
    if config.shared_branch:
        layout, c = _branch_layout("branch", config)
    else:
        layout, c = _branch_layout("branch_xz", config)
        layout += _branch_layout("branch_yz", config)[0]
    c *= 2
    for i, spec in enumerate(config.merge_stages):
        layout += _block_layout(f"merge.m{i}", c, spec, config.se_reduction)
        c = spec.out_channels
    for i, h in enumerate(config.head_hidden):
        layout += [(f"head.fc{i}.weight", (c, h), c), (f"head.fc{i}.bias", (h,), None)]
        c = h
    layout += [("head.out.weight", (c, config.n_classes), c),
               ("head.out.bias", (config.n_classes,), None)]
    return layout


def count_parameters(config: ModelConfig) -> int:
    """Closed-form parameter count, independent of any built model."""

    def block(c_in, s):
        hidden = c_in * s.expansion
        n = 0 if s.expansion == 1 else c_in * hidden + hidden
        n += hidden * s.kernel ** 2 + hidden
        if s.se:
            r = hidden // config.se_reduction
            n += 2 * hidden * r + r + hidden
        return n + hidden * s.out_channels + s.out_channels

    c = config.stem_channels
    branch = config.stem_kernel ** 2 * c + c
    for s in config.branch_stages:
        branch += block(c, s)
        c = s.out_channels
    total = branch * (1 if config.shared_branch else 2)
    c *= 2
    for s in config.merge_stages:
        total += block(c, s)
        c = s.out_channels
    for h in config.head_hidden:
        total += c * h + h
        c = h
    return total + c * config.n_classes + config.n_classes


def inverted_residual(x, params, prefix, spec: StageSpec, training=False):
    """Expand (1x1) -> depthwise kxk -> optional SE -> linear 1x1 project.

    The identity skip is added when stride is 1 and channel counts match.
    """
    act = ad.ACTIVATIONS[spec.activation]
    c_in = x.shape[1]
    h = x
    if spec.expansion != 1:
        h = act(ad.conv2d(h, params[f"{prefix}.expand.weight"], params[f"{prefix}.expand.bias"]))
    hidden = h.shape[1]
    h = act(ad.conv2d(h, params[f"{prefix}.dw.weight"], params[f"{prefix}.dw.bias"],
                      stride=spec.stride, padding=spec.kernel // 2, groups=hidden))
    if spec.se:
        h = ad.se_block(h, params[f"{prefix}.se.reduce.weight"], params[f"{prefix}.se.reduce.bias"],
                        params[f"{prefix}.se.expand.weight"], params[f"{prefix}.se.expand.bias"])
    h = ad.conv2d(h, params[f"{prefix}.project.weight"], params[f"{prefix}.project.bias"])
    if spec.stride == 1 and c_in == spec.out_channels:
        h = h + x
    return h


class SiameseNet:
    """Parameter store plus forward pass for the dual-branch classifier.

    Inputs are arrays of shape (N, 2, H, W) with the XZ view in channel 0
    and the YZ view in channel 1.
    """

    def __init__(self, config: ModelConfig, params=None, dtype=np.float64):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.layout = parameter_layout(config)
        if params is None:
            params = self._init_params(config.seed)
        self.params = {}
        for name, shape, _ in self.layout:
            arr = np.array(params[name], dtype=self.dtype)
            if arr.shape != shape:
                raise ShapeError(f"parameter {name} has shape {arr.shape}, expected {shape}")
            self.params[name] = ad.Tensor(arr, requires_grad=True, name=name)
        self._dropout_rng = np.random.default_rng([config.seed, 1])

    def _init_params(self, seed):
        rng = np.random.default_rng(seed)
        out = {}
        for name, shape, fan_in in self.layout:
            if fan_in is None:
                out[name] = np.zeros(shape)
            else:
                out[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        return out

    @property
    def shared_branch(self):
        return self.config.shared_branch

    def parameters(self):
        return [self.params[name] for name, _, _ in self.layout]

    def named_parameters(self):
        return [(name, self.params[name]) for name, _, _ in self.layout]

    def n_parameters(self):
        return int(sum(t.size for t in self.params.values()))

    def state_dict(self):
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state_dict(self, state):
        for name, t in self.params.items():
            t.data[...] = state[name]

    def copy(self):
        return SiameseNet(self.config, self.state_dict(), dtype=self.dtype)

    def reseed_dropout(self, seed):
        self._dropout_rng = np.random.default_rng(seed)

    def _branch(self, x, prefix, training):
        p = self.params
        cfg = self.config
        h = ad.relu6(ad.conv2d(x, p[f"{prefix}.stem.weight"], p[f"{prefix}.stem.bias"],
                               stride=cfg.stem_stride, padding=cfg.stem_kernel // 2))
        for i, spec in enumerate(cfg.branch_stages):
            h = inverted_residual(h, p, f"{prefix}.s{i}", spec, training)
        return h

    def check_input(self, X):
        X = np.asarray(X, dtype=self.dtype)
        s = self.config.input_size
        if X.ndim == 3:
            X = X[None]
        if X.ndim != 4 or X.shape[1:] != (2, s, s):
            raise ShapeError(f"expected image pairs of shape (N, 2, {s}, {s}), got {X.shape}")
        return X

    def forward(self, X, training=False):
        """Logits Tensor of shape (N, n_classes)."""
        X = self.check_input(X)
        n = X.shape[0]
        xz, yz = X[:, 0:1], X[:, 1:2]
        if self.config.shared_branch:
            both = self._branch(ad.Tensor(np.concatenate([xz, yz], axis=0)), "branch", training)
            f_xz, f_yz = ad.take(both, 0, n), ad.take(both, n, 2 * n)
        else:
            f_xz = self._branch(ad.Tensor(xz), "branch_xz", training)
            f_yz = self._branch(ad.Tensor(yz), "branch_yz", training)
        h = ad.concat([f_xz, f_yz], axis=1)
        for i, spec in enumerate(self.config.merge_stages):
            h = inverted_residual(h, self.params, f"merge.m{i}", spec, training)
        h = ad.global_avg_pool(h)
        for i in range(len(self.config.head_hidden)):
            h = ad.relu6(ad.dense(h, self.params[f"head.fc{i}.weight"], self.params[f"head.fc{i}.bias"]))
            h = ad.dropout(h, self.config.dropout, self._dropout_rng, training)
        return ad.dense(h, self.params["head.out.weight"], self.params["head.out.bias"])

    def loss(self, X, y, training=True):
        return ad.softmax_cross_entropy(self.forward(X, training=training), y)

    def predict_proba(self, X, batch_size=256):
        X = self.check_input(X)
        out = [ad.softmax(self.forward(X[i:i + batch_size]).data)
               for i in range(0, X.shape[0], batch_size)]
        return np.concatenate(out, axis=0)


def build_model(config: ModelConfig, seed=None, dtype=np.float64) -> SiameseNet:
    if seed is not None:
        config = config.replace(seed=int(seed))
    return SiameseNet(config, dtype=dtype)


def forward(model: SiameseNet, image_pair, mode="eval"):
    """Logits for one (XZ, YZ) pair of PixelMaps or arrays, or for a batch."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if isinstance(image_pair, (tuple, list)) and len(image_pair) == 2:
        xz, yz = (getattr(m, "image", m) for m in image_pair)
        if np.shape(xz) != np.shape(yz):
            raise ShapeError(f"view shapes differ: {np.shape(xz)} vs {np.shape(yz)}")
        X = np.stack([np.asarray(xz), np.asarray(yz)])[None]
        logits = model.forward(X, training=mode == "train")
        return ad.reshape(logits, (logits.shape[1],))
    return model.forward(image_pair, training=mode == "train")
