"""Estimator-style front ends for the pipeline pieces.

These wrap the functional modules in fit/transform objects so they can
sit inside sklearn-style workflows (get_params/set_params, cloning,
grid composition).  X is always a sequence of (image_id, image) pairs;
the network and its weights are constructor parameters, since they are
configuration rather than data.

The t-SNE estimator lives in tsne.py next to its numerics and is
re-exported here.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .engine import preprocess, run_forward
from .patches import extract_patches
from .reconstruct import Selection, reconstruct
from .sparsity import layer_sparsity
from .tsne import TsneEmbedding

__all__ = ["PatchExtractor", "SparsityProfiler", "LayerReconstructor", "TsneEmbedding"]


class PatchExtractor(BaseEstimator, TransformerMixin):
    """Transform images into PatchRecord lists for one layer."""

    def __init__(self, net=None, weights=None, layer=None, sampling="all",
                 n=None, seed=None, mean=None, threads=1):
        self.net = net
        self.weights = weights
        self.layer = layer
        self.sampling = sampling
        self.n = n
        self.seed = seed
        self.mean = mean
        self.threads = threads

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return extract_patches(X, self.net, self.weights, self.layer,
                               sampling=self.sampling, n=self.n, seed=self.seed,
                               mean=self.mean, threads=self.threads)


class SparsityProfiler(BaseEstimator):
    """Fit on an image set; exposes the per-layer report as ``report_``."""

    def __init__(self, net=None, weights=None, layers=None, post_relu=True,
                 threshold=0.0, mean=None, threads=1):
        self.net = net
        self.weights = weights
        self.layers = layers
        self.post_relu = post_relu
        self.threshold = threshold
        self.mean = mean
        self.threads = threads

    def fit(self, X, y=None):
        self.report_ = layer_sparsity(self.net, self.weights, X,
                                      layers=self.layers, post_relu=self.post_relu,
                                      threshold=self.threshold, mean=self.mean,
                                      threads=self.threads)
        return self


class LayerReconstructor(BaseEstimator, TransformerMixin):
    """Transform images into pixel-space reconstructions of one layer."""

    def __init__(self, net=None, weights=None, layer=None, mode="full",
                 k=None, row=None, col=None, n=None, mean=None):
        self.net = net
        self.weights = weights
        self.layer = layer
        self.mode = mode
        self.k = k
        self.row = row
        self.col = col
        self.n = n
        self.mean = mean

    def _selection(self) -> Selection:
        return Selection(layer=self.layer, mode=self.mode, k=self.k,
                         row=self.row, col=self.col, n=self.n)

    def transform(self, X):
        sel = self._selection()
        out = []
        for _, img in X:
            x = preprocess(np.asarray(img), self.mean)
            trace = run_forward(self.net, self.weights, x)
            out.append(reconstruct(self.net, self.weights, trace, sel))
        return out

    def fit(self, X, y=None):
        return self
