"""Soft cluster-membership classifier for data from clusters unseen in training."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError, StateError
from .model import cce_with_logits
from .numcore import Adam, Network, make_rng, softmax


class ZPredictor:
    """Dense softmax classifier mapping features X to cluster weights."""

    def __init__(self, n_features, n_clusters, hidden=(8, 8, 4), seed=0):
        if n_clusters < 2:
            raise ConfigError("a Z-predictor needs at least 2 seen clusters")
        self.n_features = n_features
        self.n_clusters = n_clusters
        self.hidden = tuple(hidden)
        self.net = Network.build([n_features, *self.hidden, n_clusters], "relu", "identity",
                                 make_rng(seed, 104729))
        self.trained = False

    def logits(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionError(f"expected {self.n_features} features, got shape {X.shape}")
        return self.net.forward(X)

    def infer_z(self, X):
        """Unthresholded softmax weights over the seen clusters."""
        if not self.trained:
            raise StateError("Z-predictor has not been trained")
        return softmax(self.logits(X)[0])

    def loss(self, X, Z):
        return cce_with_logits(Z, self.logits(X)[0])


def train_zpredictor(train, val, config, hidden=(8, 8, 4)):
    """Fit a :class:`ZPredictor` on seen-cluster data (features only, never labels).

    ``train`` / ``val`` are datasets whose ``Z`` covers the seen clusters.
    Minimizes categorical cross-entropy with Adam; keeps the epoch with the
    lowest validation cross-entropy.
    """
    zp = ZPredictor(train.p, train.n_clusters, hidden, config.seed)
    X, Z = train.X, train.Z
    Xv, Zv = val.X, val.Z
    opt = Adam(zp.net.params(), lr=config.lr)
    rng = make_rng(config.seed, 15485863)
    n = len(X)
    best, best_state, stale = np.inf, None, 0
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            out, cache = zp.net.forward(X[idx])
            g = (softmax(out) - Z[idx]) / len(idx)
            grads, _ = zp.net.backward(g, cache)
            opt.update(zp.net.params(), grads)
        v = zp.loss(Xv, Zv)
        history.append(v)
        if v < best:
            best, stale = v, 0
            best_state = {k: a.copy() for k, a in zp.net.params().items()}
        else:
            stale += 1
            if stale > config.patience:
                break
    for k, a in zp.net.params().items():
        np.copyto(a, best_state[k])
    zp.trained = True
    zp.history = history
    return zp


def infer_z(zp, X):
    return zp.infer_z(X)
