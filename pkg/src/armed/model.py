"""ARMED dense networks: fixed-effects net, adversary, random-effects head.

A fitted model produces two predictions for each sample:

* ``y_F`` from the fixed-effects net alone, ``sigmoid(h_F @ beta_L + b)``;
* ``y_M`` from the mixed path, ``sigmoid(logit_F + h_R)``, where ``h_R`` is
  the cluster-specific random effect selected by the cluster weights ``z``.

The baselines and ablations share this class and differ by ``variant``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_expit

from .errors import DimensionError, InputError, NumericError, StateError
from .numcore import Network, make_rng, sigmoid, softmax
from .variational import VariationalGaussian

VARIANTS = ("armed", "armed_no_adversary", "conventional", "cluster_input", "domain_adversarial")
RE_MODES = ("nonlinear", "linear")
Z_SOURCES = ("true_Z", "inferred_Z", "random_Z", "fixed_only")

_MODE_ALIASES = {
    "nonlinear_slopes_plus_intercept": "nonlinear",
    "linear_slopes_plus_intercept": "linear",
}


# -- losses -----------------------------------------------------------------

def bce(y, p):
    """Mean binary cross-entropy from probabilities (0 log 0 taken as 0)."""
    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = np.where(y > 0, y * np.log(np.where(y > 0, p, 1.0)), 0.0)
        neg = np.where(y < 1, (1 - y) * np.log(np.where(y < 1, 1 - p, 1.0)), 0.0)
    return float(-np.mean(pos + neg))


def bce_with_logits(y, logit):
    return float(-np.mean(y * log_expit(logit) + (1 - y) * log_expit(-logit)))


def cce(Z, Zhat):
    """Mean categorical cross-entropy; ``Zhat`` rows are probabilities."""
    Z = np.asarray(Z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(Z > 0, Z * np.log(np.where(Z > 0, Zhat, 1.0)), 0.0)
    return float(-np.sum(terms) / Z.shape[0])


def cce_with_logits(Z, logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-np.sum(Z * log_p) / Z.shape[0])


def mix(logit_F, h_R):
    """Additive mixing on the logit scale."""
    return sigmoid(np.asarray(logit_F) + np.asarray(h_R))


def armed_loss(y, y_M, y_F, Z, Zhat, kl, lambda_g=1.0, lambda_K=1e-3, lambda_F=0.5):
    """Combined objective of the main model.

    ``total = BCE(y, y_M) + lambda_F BCE(y, y_F) + lambda_K kl - lambda_g CCE(Z, Zhat)``.
    Returns ``(total, components)``.
    """
    comps = {
        "bce_mixed": bce(y, y_M),
        "bce_fixed": bce(y, y_F),
        "kl": float(kl),
        "cce": cce(Z, Zhat) if Zhat is not None else 0.0,
    }
    for name, value in comps.items():
        if not np.isfinite(value):
            raise NumericError(name)
    total = comps["bce_mixed"] + lambda_F * comps["bce_fixed"] + lambda_K * comps["kl"] - lambda_g * comps["cce"]
    return total, comps


def check_simplex(z, tol=1e-6):
    z = np.asarray(z, dtype=float)
    if z.ndim != 2:
        raise InputError("cluster weights must be a 2-D array")
    if np.any(z < -tol) or np.any(np.abs(z.sum(axis=1) - 1.0) > tol):
        raise InputError("cluster weight rows must lie on the probability simplex")
    return z


# -- random effects ---------------------------------------------------------

class RandomEffectsHead:
    """Cluster-specific slopes and intercept with variational Gaussian weights.

    ``nonlinear`` mode: ``h_R = h_F . u_nlin(z) + u_int(z)``.
    ``linear`` mode: ``h_R = x . u_lin(z) + u_int(z)``.
    For a soft ``z`` the cluster rows are mixed first, ``u(z) = z @ U``.
    """

    def __init__(self, mode, n_clusters, latent_dim, n_features, sigma_p=1.0):
        mode = _MODE_ALIASES.get(mode, mode)
        if mode not in RE_MODES:
            raise ValueError(f"unknown random-effects mode {mode!r}")
        self.mode = mode
        self.n_clusters = n_clusters
        self.vars = {"u_int": VariationalGaussian.init((n_clusters, 1), sigma_p)}
        if mode == "nonlinear":
            self.vars["u_nlin"] = VariationalGaussian.init((n_clusters, latent_dim), sigma_p)
        else:
            self.vars["u_lin"] = VariationalGaussian.init((n_clusters, n_features), sigma_p)

    @property
    def slope_name(self):
        return "u_nlin" if self.mode == "nonlinear" else "u_lin"

    def params(self):
        return {f"{k}.{p}": arr for k, vg in self.vars.items() for p, arr in vg.params().items()}

    def weights(self, eps=None):
        """Weights from given standard-normal draws, or posterior means if ``eps`` is None."""
        if eps is None:
            return {k: vg.mu for k, vg in self.vars.items()}
        return {k: vg.mu + vg.sigma * eps[k] for k, vg in self.vars.items()}

    def draw_eps(self, rng):
        return {k: rng.standard_normal(vg.mu.shape) for k, vg in self.vars.items()}

    def kl(self):
        return sum(vg.kl_to_prior() for vg in self.vars.values())

    def forward(self, x, h_F, z, weights=None):
        weights = self.weights() if weights is None else weights
        if z.shape[1] != self.n_clusters:
            raise DimensionError(f"z has {z.shape[1]} columns, head has {self.n_clusters} clusters")
        slope_src = h_F if self.mode == "nonlinear" else x
        slopes = z @ weights[self.slope_name]
        h_R = np.sum(slope_src * slopes, axis=1) + (z @ weights["u_int"])[:, 0]
        return h_R, (slope_src, slopes, z)

    def backward(self, grad_hR, cache):
        """Returns (weight grads, grad on h_F or None)."""
        slope_src, slopes, z = cache
        g = grad_hR[:, None]
        grads = {
            self.slope_name: z.T @ (g * slope_src),
            "u_int": z.T @ g,
        }
        d_latent = g * slopes if self.mode == "nonlinear" else None
        return grads, d_latent

    def param_grads(self, weight_grads, eps, kl_weight):
        """Map weight grads to (mu, rho) grads and add the weighted KL gradient."""
        out = {}
        for k, vg in self.vars.items():
            gw = weight_grads[k]
            if eps is None:
                dmu, drho = gw, np.zeros_like(vg.rho)
            else:
                dmu, drho = vg.sample_grads(eps[k], gw)
            kmu, krho = vg.kl_grads()
            out[f"{k}.mu"] = dmu + kl_weight * kmu
            out[f"{k}.rho"] = drho + kl_weight * krho
        return out


def random_forward(head, x, h_F, z, weights=None):
    check_simplex(z)
    return head.forward(np.asarray(x, float), np.asarray(h_F, float), z, weights)[0]


# -- model ------------------------------------------------------------------

@dataclass
class FixedOutput:
    hidden: list
    latent: np.ndarray
    logit: np.ndarray
    y_hat: np.ndarray
    cache: object = field(repr=False, default=None)


@dataclass
class Objective:
    total: float
    components: dict
    weights: dict
    grads: dict = field(repr=False, default_factory=dict)


class ArmedModel:
    """Fixed-effects net plus optional adversary and random-effects head.

    Which parts exist depends on ``variant``:

    ==================== ========= ========= =========
    variant              adversary re_head   Z input
    ==================== ========= ========= =========
    armed                yes       yes       no
    armed_no_adversary   no        yes       no
    conventional         no        no        no
    cluster_input        no        no        yes
    domain_adversarial   yes       no        no
    ==================== ========= ========= =========

    With a single cluster the adversary is dropped since its loss is constant.
    """

    def __init__(self, n_features, n_clusters, variant="armed", re_mode="nonlinear",
                 lambda_g=1.0, lambda_K=1e-3, lambda_F=0.5, sigma_p=1.0, seed=0,
                 hidden=(4, 4, 4), adversary_hidden=(8, 8, 4)):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        if min(lambda_g, lambda_K, lambda_F) < 0:
            raise ValueError("loss weights must be nonnegative")
        self.n_features = int(n_features)
        self.n_clusters = int(n_clusters)
        self.variant = variant
        self.re_mode = _MODE_ALIASES.get(re_mode, re_mode)
        self.lambda_g, self.lambda_K, self.lambda_F = float(lambda_g), float(lambda_K), float(lambda_F)
        self.sigma_p = float(sigma_p)
        self.hidden = tuple(hidden)
        self.adversary_hidden = tuple(adversary_hidden)
        rng = make_rng(seed, 7919)

        in_dim = self.n_features + (self.n_clusters if variant == "cluster_input" else 0)
        self.fixed = Network.build([in_dim, *self.hidden, 1], "relu", "identity", rng)
        self.adversary = None
        if variant in ("armed", "domain_adversarial") and self.n_clusters > 1:
            self.adversary = Network.build(
                [sum(self.hidden), *self.adversary_hidden, self.n_clusters], "relu", "identity", rng
            )
        self.re_head = None
        if variant in ("armed", "armed_no_adversary"):
            self.re_head = RandomEffectsHead(self.re_mode, self.n_clusters, self.hidden[-1],
                                             self.n_features, sigma_p)
        self.zpredictor = None

    # -- forward pieces --

    @property
    def uses_z_input(self):
        return self.variant == "cluster_input"

    def fixed_input(self, X, Z=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionError(f"expected {self.n_features} features, got shape {X.shape}")
        if not self.uses_z_input:
            return X
        if Z is None:
            raise InputError("cluster_input variant needs Z")
        return np.hstack([X, Z])

    def fixed_forward(self, X_in):
        """Forward pass of the fixed-effects net on its own input matrix."""
        _, cache = self.fixed.forward(X_in)
        logit = cache.outputs[-1][:, 0]
        hidden = cache.outputs[:-1]
        return FixedOutput(hidden, hidden[-1], logit, sigmoid(logit), cache)

    def adversary_logits(self, hidden):
        if self.adversary is None:
            raise StateError("this model has no adversary")
        return self.adversary.forward(np.hstack(hidden))

    def adversary_forward(self, hidden):
        """Predicted cluster probabilities from the fixed net's hidden activations."""
        if self.adversary is None:
            n = hidden[0].shape[0]
            if self.n_clusters == 1:
                return np.ones((n, 1))
            raise StateError("this model has no adversary")
        return softmax(self.adversary_logits(hidden)[0])

    # -- parameters --

    def param_groups(self):
        groups = {"fixed": self.fixed.params()}
        if self.re_head is not None:
            groups["re_head"] = self.re_head.params()
        if self.adversary is not None:
            groups["adversary"] = self.adversary.params()
        return groups

    def get_state(self):
        return {g: {k: v.copy() for k, v in p.items()} for g, p in self.param_groups().items()}

    def set_state(self, state):
        for g, params in self.param_groups().items():
            for k, v in params.items():
                np.copyto(v, state[g][k])

    # -- objectives --

    def main_objective(self, X, y, Z, eps=None, kl_scale=1.0, with_grads=True):
        """Loss of the main model (fixed net + random head) with the adversary frozen.

        ``eps`` holds standard-normal draws for the random-effect weights; None
        uses posterior means.  ``kl_scale`` multiplies the KL weight (the trainer
        passes 1 / batches-per-epoch).  Gradients cover the ``fixed`` and
        ``re_head`` groups only.
        """
        y = np.asarray(y, dtype=float)
        n = y.shape[0]
        fo = self.fixed_forward(self.fixed_input(X, Z))
        comps, weights = {}, {}
        g_logit = np.zeros(n)
        extra = {}
        re_grads = None

        if self.re_head is not None:
            rw = self.re_head.weights(eps)
            h_R, rcache = self.re_head.forward(X, fo.latent, Z, rw)
            logit_M = fo.logit + h_R
            comps["bce_mixed"] = bce_with_logits(y, logit_M)
            comps["bce_fixed"] = bce_with_logits(y, fo.logit)
            comps["kl"] = self.re_head.kl()
            weights["bce_mixed"] = 1.0
            weights["bce_fixed"] = self.lambda_F
            weights["kl"] = self.lambda_K * kl_scale
            if with_grads:
                g_M = (sigmoid(logit_M) - y) / n
                g_logit = g_M + self.lambda_F * (fo.y_hat - y) / n
                wgrads, d_latent = self.re_head.backward(g_M, rcache)
                if d_latent is not None:
                    extra[len(self.hidden) - 1] = d_latent
                re_grads = self.re_head.param_grads(wgrads, eps, weights["kl"])
        else:
            comps["bce_fixed"] = bce_with_logits(y, fo.logit)
            weights["bce_fixed"] = 1.0
            if with_grads:
                g_logit = (fo.y_hat - y) / n

        if self.adversary is not None:
            logits, acache = self.adversary_logits(fo.hidden)
            comps["cce"] = cce_with_logits(Z, logits)
            weights["cce"] = -self.lambda_g
            if with_grads and self.lambda_g > 0:
                g_adv = -self.lambda_g * (softmax(logits) - Z) / n
                _, d_concat = self.adversary.backward(g_adv, acache)
                start = 0
                for i, width in enumerate(self.hidden):
                    piece = d_concat[:, start:start + width]
                    extra[i] = extra[i] + piece if i in extra else piece
                    start += width

        for name, value in comps.items():
            if not np.isfinite(value):
                raise NumericError(name)
        total = sum(weights[k] * comps[k] for k in comps)
        grads = {}
        if with_grads:
            fgrads, _ = self.fixed.backward(g_logit[:, None], fo.cache, extra)
            grads["fixed"] = fgrads
            if re_grads is not None:
                grads["re_head"] = re_grads
        return Objective(total, comps, weights, grads)

    def adversary_objective(self, hidden, Z, with_grads=True):
        """CCE of the adversary on given hidden activations, gradients for the adversary only."""
        logits, acache = self.adversary_logits(hidden)
        loss = cce_with_logits(Z, logits)
        if not np.isfinite(loss):
            raise NumericError("cce")
        grads = {}
        if with_grads:
            g = (softmax(logits) - Z) / Z.shape[0]
            grads, _ = self.adversary.backward(g, acache)
        return loss, grads

    def criterion(self, X, y, Z):
        """Early-stopping criterion: main loss without the adversarial term, posterior means."""
        obj = self.main_objective(X, y, Z, eps=None, kl_scale=1.0, with_grads=False)
        return sum(obj.weights[k] * obj.components[k] for k in obj.components if k != "cce")

    # -- prediction --

    def resolve_z(self, X, z_source, Z=None, rng=None):
        n = X.shape[0]
        if z_source == "true_Z":
            if Z is None:
                raise InputError("true_Z needs cluster labels")
            return check_simplex(Z)
        if z_source == "inferred_Z":
            if self.zpredictor is None:
                raise StateError("inferred_Z needs a trained Z-predictor")
            return self.zpredictor.infer_z(X)
        if z_source == "random_Z":
            rng = make_rng(0) if rng is None else rng
            return np.eye(self.n_clusters)[rng.integers(0, self.n_clusters, size=n)]
        raise ValueError(f"unknown z_source {z_source!r}")

    def predict(self, X, z_source="true_Z", Z=None, rng=None):
        """Scores in (0, 1) using posterior-mean random effects."""
        if z_source not in Z_SOURCES:
            raise ValueError(f"unknown z_source {z_source!r}")
        X = np.asarray(X, dtype=float)
        if self.variant in ("conventional", "domain_adversarial"):
            return self.fixed_forward(self.fixed_input(X)).y_hat
        if self.variant == "cluster_input":
            z = np.zeros((X.shape[0], self.n_clusters)) if z_source == "fixed_only" else \
                self.resolve_z(X, z_source, Z, rng)
            return self.fixed_forward(self.fixed_input(X, z)).y_hat
        fo = self.fixed_forward(X)
        if z_source == "fixed_only":
            return fo.y_hat
        z = self.resolve_z(X, z_source, Z, rng)
        h_R, _ = self.re_head.forward(X, fo.latent, z)
        return mix(fo.logit, h_R)

    def input_gradient(self, X, Z=None):
        """d y_F / d X for every sample, shape (n, n_features)."""
        fo = self.fixed_forward(self.fixed_input(X, Z))
        g = (fo.y_hat * (1.0 - fo.y_hat))[:, None]
        _, dx = self.fixed.backward(g, fo.cache)
        return dx[:, :self.n_features]


def predict(model, X, z_source="true_Z", Z=None, rng=None):
    return model.predict(X, z_source, Z, rng)
