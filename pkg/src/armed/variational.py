"""Mean-field Gaussian weights with a zero-mean Gaussian prior.

Each weight has a posterior mean ``mu`` and an unconstrained scale ``rho``;
the posterior standard deviation is ``softplus(rho)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError


def softplus(x):
    return np.logaddexp(0.0, x)


def inverse_softplus(y):
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


@dataclass
class VariationalGaussian:
    mu: np.ndarray
    rho: np.ndarray
    sigma_p: float = 1.0

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)
        if self.mu.shape != self.rho.shape:
            raise ValueError(f"mu {self.mu.shape} and rho {self.rho.shape} differ in shape")

    @classmethod
    def init(cls, shape, sigma_p, init_scale=0.1):
        """Zero means; posterior std set to ``init_scale * sigma_p``."""
        if sigma_p <= 0:
            raise ConfigError("sigma_p must be positive")
        rho = np.full(shape, float(inverse_softplus(init_scale * sigma_p)))
        return cls(np.zeros(shape), rho, float(sigma_p))

    @property
    def sigma(self):
        return softplus(self.rho)

    def sample(self, rng):
        """Draw ``mu + sigma * eps``; returns ``(weights, eps)``.

        Keep ``eps`` to route gradients back with :meth:`sample_grads`.
        """
        eps = rng.standard_normal(self.mu.shape)
        return self.mu + self.sigma * eps, eps

    def sample_grads(self, eps, grad_w):
        """Chain rule through the reparameterization: returns (dmu, drho)."""
        return grad_w, grad_w * eps * expit(self.rho)

    def posterior_mean(self):
        return self.mu

    def kl_to_prior(self):
        """Closed-form KL(q || N(0, sigma_p^2)) summed over all elements."""
        if self.sigma_p <= 0:
            raise ConfigError("sigma_p must be positive")
        s = self.sigma
        sp = self.sigma_p
        return float(np.sum(np.log(sp / s) + (s * s + self.mu * self.mu) / (2.0 * sp * sp) - 0.5))

    def kl_grads(self):
        """Gradient of :meth:`kl_to_prior` with respect to (mu, rho)."""
        s = self.sigma
        sp2 = self.sigma_p ** 2
        dmu = self.mu / sp2
        ds = -1.0 / s + s / sp2
        return dmu, ds * expit(self.rho)

    def params(self):
        return {"mu": self.mu, "rho": self.rho}


def sample(vg, rng):
    return vg.sample(rng)[0]


def kl_to_prior(vg):
    return vg.kl_to_prior()


def posterior_mean(vg):
    return vg.posterior_mean()
