from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..autodiff import softmax
from ..model import ModelConfig, build_model, desk_config
from ..validation import check_image_pairs, check_labels
from .loop import DESK_LR, TrainConfig, fit_arrays
from .split import split_dataset


class SiameseCNNClassifier(ClassifierMixin, BaseEstimator):
    """scikit-learn wrapper around the dual-view network and its training loop.

    ``X`` is (N, 2, S, S): XZ view then YZ view. Without ``eval_set`` a
    stratified ``validation_fraction`` of the training data is held out for
    early stopping.
    """

    def __init__(self, model_config=None, lr=DESK_LR, batch_size=16, max_epochs=300,
                 patience=10, validation_fraction=0.1, seed=0, dtype="float64"):
        self.model_config = model_config
        self.lr = lr
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.seed = seed
        self.dtype = dtype

    def _train_config(self):
        v = self.validation_fraction
        return TrainConfig(lr=self.lr, batch_size=self.batch_size, max_epochs=self.max_epochs,
                           patience=self.patience, fractions=(1.0 - v, v), seed=self.seed,
                           dtype=self.dtype)

    def fit(self, X, y, eval_set=None):
        cfg = self._train_config()
        base = self.model_config or desk_config()
        if isinstance(base, dict):
            base = ModelConfig.from_dict(base)
        X = check_image_pairs(X, dtype=np.dtype(self.dtype))
        base = base.replace(input_size=X.shape[2], seed=self.seed)
        y = check_labels(y, base.n_classes, len(X))
        if eval_set is None:
            tr, va = split_dataset(y, cfg.fractions, cfg.seed)
            X_tr, y_tr, X_va, y_va = X[tr], y[tr], X[va], y[va]
        else:
            X_tr, y_tr = X, y
            X_va = check_image_pairs(eval_set[0], X.shape[2], np.dtype(self.dtype))
            y_va = check_labels(eval_set[1], base.n_classes, len(X_va))
        model = build_model(base, dtype=np.dtype(self.dtype))
        self.model_, self.history_ = fit_arrays(model, X_tr, y_tr, X_va, y_va, cfg)
        self.classes_ = np.arange(base.n_classes)
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def decision_function(self, X, batch_size=256):
        check_is_fitted(self, "model_")
        X = check_image_pairs(X, self.model_.config.input_size, self.model_.dtype)
        return np.concatenate([self.model_.forward(X[i:i + batch_size]).data
                               for i in range(0, len(X), batch_size)])

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
