"""Resolution degradation and model evaluation harness."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ..autodiff import ShapeError, softmax
from ..detsim.render import PixelMap
from .metrics import evaluate_records, records_from_arrays

MODES = ("rerender", "direct")


def _check_factor(factor, h, w):
    if isinstance(factor, bool) or not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ValueError(f"downsample factor must be a positive integer, got {factor!r}")
    if h % factor or w % factor:
        raise ValueError(f"factor {factor} does not divide a {h}x{w} map")


def mean_pool(images, factor):
    """factor x factor mean pooling over the last two axes."""
    a = np.asarray(images)
    *lead, h, w = a.shape
    _check_factor(factor, h, w)
    if factor == 1:
        return a
    blocks = a.reshape(*lead, h // factor, factor, w // factor, factor).astype(np.float64)
    return blocks.sum(axis=(-3, -1)) / (factor * factor)


def downsample_pixelmap(pm, factor):
    """PixelMap (or bare 2-D array) pooled by ``factor``; factor 1 returns the input."""
    if isinstance(pm, PixelMap):
        if factor == 1:
            _check_factor(factor, pm.height, pm.width)
            return pm
        return PixelMap(pm.view, mean_pool(pm.intensities, factor), pm.raw_energy_total)
    return mean_pool(pm, factor)


def upsample_repeat(images, factor):
    if factor == 1:
        return images
    return np.repeat(np.repeat(images, factor, axis=-2), factor, axis=-1)


class PixelDownsampler(TransformerMixin, BaseEstimator):
    """Degrade (N, 2, S, S) image pairs by mean pooling.

    mode "rerender" replicates each pooled pixel back to S x S so a fixed-size
    model still sees its configured input size; "direct" returns the pooled
    (S/f) x (S/f) images.
    """

    def __init__(self, factor=2, mode="rerender"):
        self.factor = factor
        self.mode = mode

    def fit(self, X=None, y=None):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        return self

    def transform(self, X):
        self.fit()
        X = np.asarray(X)
        if self.factor == 1:
            return X
        pooled = mean_pool(X, self.factor)
        if self.mode == "rerender":
            return upsample_repeat(pooled, self.factor).astype(X.dtype)
        return pooled.astype(X.dtype)


def predict_scores(model, X, batch_size=256):
    X = np.asarray(X)
    return np.concatenate([softmax(model.forward(X[i:i + batch_size]).data)
                           for i in range(0, len(X), batch_size)])


def evaluate_model(model, X, y, event_ids=None, factor=1):
    scores = predict_scores(model, X)
    return evaluate_records(records_from_arrays(y, scores, event_ids), factor=factor)


def generalization_eval(model, X, y, factor=2, mode="rerender", event_ids=None):
    """Metric suite on inputs degraded by ``factor``; the report is tagged with it.

    In "direct" mode the pooled images go straight to the model, which must
    then have been built for that size.
    """
    X = np.asarray(X)
    degraded = PixelDownsampler(factor, mode).transform(X)
    if degraded.shape[-1] != model.config.input_size:
        raise ShapeError(f"degraded images are {degraded.shape[-1]} px but the model expects "
                         f"{model.config.input_size}; use mode='rerender'")
    return evaluate_model(model, degraded, y, event_ids, factor)
