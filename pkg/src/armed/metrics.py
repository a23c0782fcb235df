"""Evaluation statistics: AUROC, Youden-point metrics, feature importance,
paired t-tests and decision-boundary grids."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import InputError, UndefinedMetricError


@dataclass
class OperatingMetrics:
    auroc: float
    balanced_accuracy: float
    sensitivity: float
    specificity: float
    youden_threshold: float


@dataclass
class TTestResult:
    t_statistic: float
    p_value: float
    df: int
    # True when p_value is only an upper bound (zero-variance differences).
    p_is_bound: bool = False


@dataclass
class DecisionGrid:
    x1: np.ndarray
    x2: np.ndarray
    probability: np.ndarray  # shape (len(x2), len(x1))
    cluster: int | None = None

    def rows(self):
        """(x1, x2, cluster, probability) tuples in row-major grid order."""
        xx, yy = np.meshgrid(self.x1, self.x2)
        label = "" if self.cluster is None else self.cluster
        return [(a, b, label, p) for a, b, p in zip(xx.ravel(), yy.ravel(), self.probability.ravel())]


def _check_binary(labels):
    labels = np.asarray(labels)
    pos = labels > 0.5
    if pos.all() or (~pos).all():
        raise UndefinedMetricError("metric needs both classes present")
    return pos


def auroc(scores, labels):
    """Probability that a random positive outscores a random negative (ties count 1/2)."""
    scores = np.asarray(scores, dtype=float)
    pos = _check_binary(labels)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def accuracy(scores, labels, threshold=0.5):
    return float(np.mean((np.asarray(scores) >= threshold) == (np.asarray(labels) > 0.5)))


def youden_metrics(scores, labels):
    """Operating point maximizing sensitivity + specificity - 1.

    Every distinct score is a candidate cut (predict positive when
    ``score >= cut``); ties in Youden's J go to the lowest cut.
    """
    scores = np.asarray(scores, dtype=float)
    pos = _check_binary(labels)
    n_pos, n_neg = pos.sum(), (~pos).sum()
    cuts = np.unique(scores)
    order = np.argsort(scores, kind="stable")
    s_sorted, pos_sorted = scores[order], pos[order]
    # Samples strictly below each cut are predicted negative.
    below = np.searchsorted(s_sorted, cuts, side="left")
    pos_below = np.concatenate([[0], np.cumsum(pos_sorted)])[below]
    neg_below = below - pos_below
    sens = (n_pos - pos_below) / n_pos
    spec = neg_below / n_neg
    j = sens + spec - 1.0
    best = int(np.flatnonzero(j == j.max())[0])
    return OperatingMetrics(
        auroc=auroc(scores, labels),
        balanced_accuracy=float((sens[best] + spec[best]) / 2.0),
        sensitivity=float(sens[best]),
        specificity=float(spec[best]),
        youden_threshold=float(cuts[best]),
    )


def feature_importance(model, X, Z=None):
    """Mean absolute gradient of the fixed-effects prediction w.r.t. each input feature."""
    return np.mean(np.abs(model.input_gradient(X, Z)), axis=0)


def aggregate_importance(per_fold):
    """Median across folds."""
    return np.median(np.asarray(per_fold, dtype=float), axis=0)


# -- Student t ------------------------------------------------------------

_CF_TOL = 1e-12
_CF_MAX_ITER = 10_000
_TINY = 1e-300


def _beta_cf(a, b, x):
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = _TINY if abs(d) < _TINY else d
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_TOL:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(x, a, b):
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # The continued fraction converges fast only below (a + 1) / (a + b + 2).
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def t_cdf(t, df):
    """Student-t cumulative distribution function."""
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    tail = 0.5 * regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5)
    return 1.0 - tail if t > 0 else tail


def t_two_sided_p(t, df):
    if math.isinf(t):
        return 0.0
    return regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5)


def paired_t_test(a, b):
    """Paired t-test on ``a - b`` with a two-sided Student-t p-value.

    Degenerate cases: all differences zero gives t = 0, p = 1; constant
    nonzero differences give t = +/-inf with ``p_is_bound`` set and
    ``p_value`` equal to machine epsilon (the true p is below it).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise InputError("paired t-test needs two equal-length samples of size >= 2")
    d = a - b
    n = len(d)
    df = n - 1
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0, df)
        return TTestResult(math.copysign(math.inf, mean), sys.float_info.epsilon, df, True)
    t = mean / (sd / math.sqrt(n))
    p = t_two_sided_p(t, df)
    if p <= 0.0:
        return TTestResult(t, sys.float_info.epsilon, df, True)
    return TTestResult(t, min(p, 1.0), df)


# -- decision boundaries ---------------------------------------------------

def decision_grid(model, z=None, bounds=(-1.5, 1.5), resolution=101, cluster=None):
    """Probability surface of a 2-feature model on a uniform square grid.

    ``z`` is one cluster-weight row (mixed prediction for that cluster) or
    None for the fixed-effects prediction.
    """
    if model.n_features != 2:
        raise InputError("decision grids need a model with exactly 2 input features")
    lo, hi = bounds
    axis = np.linspace(lo, hi, resolution)
    xx, yy = np.meshgrid(axis, axis)
    X = np.column_stack([xx.ravel(), yy.ravel()])
    if z is None:
        prob = model.predict(X, "fixed_only")
    else:
        Z = np.repeat(np.asarray(z, dtype=float).reshape(1, -1), len(X), axis=0)
        prob = model.predict(X, "true_Z", Z)
    return DecisionGrid(axis, axis.copy(), prob.reshape(resolution, resolution), cluster)
