"""scikit-learn style wrappers so compression passes chain in a ``Pipeline`` and
the inference engines expose ``predict``/``decision_function``.

The transformers operate on :class:`ModelParams` rather than feature
matrices; the classifiers take batches of (channels, length) signals.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.pipeline import Pipeline
from sklearn.utils.validation import check_is_fitted

from .compress import (
    DEFAULT_BDP_THRESHOLDS,
    DEFAULT_NZP_THRESHOLDS,
    QuantSpec,
    bias_driven_prune,
    cluster_weights,
    near_zero_prune,
    quantize,
)
from .fxp import ACTIVATION_WIDTH, calibrate_formats, quant_forward
from .reference import ModelParams, forward
from .validation import check_signals, check_thresholds


def _check_params(params) -> ModelParams:
    if not isinstance(params, ModelParams):
        raise TypeError(f"expected ModelParams, got {type(params).__name__}")
    return params


class NearZeroPruner(TransformerMixin, BaseEstimator):
    """Magnitude pruning of conv weights, one threshold per conv layer."""

    def __init__(self, thresholds=DEFAULT_NZP_THRESHOLDS):
        self.thresholds = thresholds

    def fit(self, params, y=None):
        params = _check_params(params)
        n = len(params.net.conv_indices())
        self.thresholds_ = check_thresholds(self.thresholds, n, nonnegative=True)
        _, self.record_ = near_zero_prune(params, self.thresholds_)
        return self

    def transform(self, params):
        check_is_fitted(self, "thresholds_")
        return near_zero_prune(_check_params(params), self.thresholds_)[0]


class BiasDrivenPruner(TransformerMixin, BaseEstimator):
    """Drop conv+BN channels whose BN bias is below the per-block threshold."""

    def __init__(self, thresholds=DEFAULT_BDP_THRESHOLDS):
        self.thresholds = thresholds

    def fit(self, params, y=None):
        params = _check_params(params)
        self.thresholds_ = check_thresholds(self.thresholds)
        pruned, self.record_ = bias_driven_prune(params, self.thresholds_)
        self.alive_ = dict(pruned.alive)
        return self

    def transform(self, params):
        check_is_fitted(self, "thresholds_")
        return bias_driven_prune(_check_params(params), self.thresholds_)[0]


class WeightClusterer(TransformerMixin, BaseEstimator):
    """Per-layer K-means codebooks; ``transform`` snaps weights to centroids."""

    def __init__(self, bits=7, seed=0, n_init=8):
        self.bits = bits
        self.seed = seed
        self.n_init = n_init

    def fit(self, params, y=None):
        self.codebook_ = cluster_weights(_check_params(params), self.bits, self.seed, self.n_init)
        return self

    def transform(self, params):
        check_is_fitted(self, "codebook_")
        return self.codebook_.apply(_check_params(params))


def compression_pipeline(nzp=DEFAULT_NZP_THRESHOLDS, bdp=DEFAULT_BDP_THRESHOLDS, bits=7, seed=0) -> Pipeline:
    """NZP -> BDP -> clustering as a scikit-learn ``Pipeline`` over ModelParams."""
    return Pipeline([
        ("near_zero", NearZeroPruner(nzp)),
        ("bias_driven", BiasDrivenPruner(bdp)),
        ("cluster", WeightClusterer(bits, seed)),
    ])


class ReferenceClassifier(ClassifierMixin, BaseEstimator):
    """Float inference with fixed parameters; ``fit`` only validates."""

    def __init__(self, params=None):
        self.params = params

    def fit(self, X=None, y=None):
        self.params_ = _check_params(self.params)
        if X is not None:
            check_signals(X, self.params_.net)
        self.classes_ = np.arange(self.params_.net.out_shape(len(self.params_.net.layers) - 1)[0])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        X = check_signals(X, self.params_.net)
        return np.stack([forward(self.params_.net, self.params_, x)[0] for x in X])

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]


class FixedPointClassifier(ClassifierMixin, BaseEstimator):
    """Compress ``params`` and run bit-accurate PE inference.

    ``fit(X)`` clusters and quantizes the (already pruned) parameters and
    calibrates activation formats on the signals ``X``.
    """

    def __init__(self, params=None, quant_spec=None, activation_width=ACTIVATION_WIDTH, seed=0, n_init=8):
        self.params = params
        self.quant_spec = quant_spec
        self.activation_width = activation_width
        self.seed = seed
        self.n_init = n_init

    def fit(self, X, y=None):
        params = _check_params(self.params)
        X = check_signals(X, params.net)
        spec = self.quant_spec or QuantSpec()
        codebook = cluster_weights(params, spec.conv_weight, self.seed, self.n_init)
        qmodel = quantize(params, codebook, spec)
        fmts = calibrate_formats(qmodel, X, self.activation_width)
        self.qmodel_ = qmodel.with_activation_formats(fmts)
        self.classes_ = np.arange(params.net.out_shape(len(params.net.layers) - 1)[0])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "qmodel_")
        X = check_signals(X, self.qmodel_.net)
        return np.stack([quant_forward(self.qmodel_, x)[0] for x in X])

    def saturation_counts(self, X) -> dict:
        """Clamped values per stage, summed over the batch."""
        check_is_fitted(self, "qmodel_")
        total: dict = {}
        for x in check_signals(X, self.qmodel_.net):
            for k, v in quant_forward(self.qmodel_, x)[2].items():
                total[k] = total.get(k, 0) + v
        return total

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]
