"""Measure-dependent coefficients (b, sigma, beta) and the builtin registry."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..drivers import compensator as _compensator

__all__ = [
    "EmpiricalMeasure",
    "CoefficientSet",
    "Builtin",
    "REGISTRY",
    "make_coefficients",
    "CoefficientError",
]


class CoefficientError(ValueError):
    pass


class EmpiricalMeasure:
    """Uniform atomic measure on the rows of ``points``."""

    def __init__(self, points):
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.shape[0] < 1:
            raise CoefficientError("empirical measure needs at least one atom")
        self.points = p
        self._mean = None
        self._trig = None

    @property
    def k(self):
        return self.points.shape[0]

    @property
    def weights(self):
        return np.full(self.k, 1.0 / self.k)

    # correctly rounded sums make every statistic invariant under relabeling
    def _avg(self, a):
        return np.array([math.fsum(col) / self.k for col in a.T])

    def mean(self):
        if self._mean is None:
            self._mean = self._avg(self.points)
        return self._mean

    def trig_means(self):
        # (mean sin, mean cos) per coordinate, enough for the sin kernel
        if self._trig is None:
            self._trig = (self._avg(np.sin(self.points)), self._avg(np.cos(self.points)))
        return self._trig


class CoefficientSet:
    """Interface used by the particle engine. All methods are row-vectorized.

    Attributes
    ----------
    gamma, delta : float
        Declared Lipschitz and growth constants.
    measure_dependent : bool
    jump_state_free : bool
        ``beta`` depends on the mark only, so its compensator is a constant.
    """

    gamma = 0.0
    delta = 0.0
    measure_dependent = True
    jump_state_free = False

    def drift(self, t, X, mu):
        raise NotImplementedError

    def diffusion(self, t, X, mu):
        """Matrix of shape ``(n, d, m)`` (or ``(d, m)`` when constant)."""
        raise NotImplementedError

    def jump(self, t, X, mu, Z):
        raise NotImplementedError

    def noise_term(self, t, X, mu, dW):
        S = self.diffusion(t, X, mu)
        if S.ndim == 2:
            return np.einsum("jk,nk->nj", S, dW)
        return np.einsum("njk,nk->nj", S, dW)

    def compensator(self, t, X, mu, intensity, marks):
        """``intensity * E beta(t, x, mu, z)`` per row, shape ``(n, d)`` or ``(d,)``."""
        if intensity == 0 or marks is None:
            return np.zeros(X.shape[1])
        if self.jump_state_free:
            val, _ = _compensator(lambda z: self.jump(t, X[:1], mu, z), intensity, marks)
            return np.asarray(val)
        val, _ = _compensator(lambda z: self.jump(t, X[:, None, :], mu, z[None]), intensity, marks)
        return val


@dataclass(frozen=True)
class Builtin(CoefficientSet):
    """Mean-field family used by every builtin experiment::

        b(x, mu)  = a * mean(mu) + c * x + f0 + (kappa + eps) * int sin(y - x) mu(dy)
        sigma     = sigma * I_{d x m}
        beta(z)   = jump_scale * z

    ``eps`` carries the bounded perturbation of the stability experiment; the
    sine acts coordinate-wise.
    """

    d: int = 1
    a: float = 0.0
    c: float = 0.0
    f0: float = 0.0
    kappa: float = 0.0
    sigma: float = 0.0
    m: int = 1
    jump_scale: float = 0.0
    eps: float = 0.0
    name: str = "linear"

    jump_state_free = True

    @property
    def measure_dependent(self):
        return self.a != 0 or (self.kappa + self.eps) != 0

    @property
    def gamma(self):
        return max(abs(self.a), abs(self.c)) + abs(self.kappa + self.eps)

    @property
    def delta(self):
        return abs(self.f0) + abs(self.a) + abs(self.c) + abs(self.kappa + self.eps) * np.sqrt(self.d) + abs(self.sigma) * np.sqrt(min(self.d, self.m))

    def perturbed(self, eps):
        return replace(self, eps=self.eps + eps)

    def drift(self, t, X, mu):
        out = self.c * X + self.f0
        if self.a != 0:
            out = out + self.a * mu.mean()
        k = self.kappa + self.eps
        if k != 0:
            ms, mc = mu.trig_means()
            # mean sin(y - x) = mean(sin y) cos x - mean(cos y) sin x
            out = out + k * (ms * np.cos(X) - mc * np.sin(X))
        return out

    def diffusion(self, t, X, mu):
        return self.sigma * np.eye(self.d, self.m)

    def noise_term(self, t, X, mu, dW):
        if self.sigma == 0:
            return np.zeros_like(X)
        k = min(self.d, self.m)
        out = np.zeros_like(X)
        out[:, :k] = self.sigma * dW[:, :k]
        return out

    def jump(self, t, X, mu, Z):
        Z = np.asarray(Z, dtype=float)
        if Z.shape[-1] != self.d:
            raise CoefficientError("jump marks must have the state dimension")
        return self.jump_scale * np.broadcast_to(Z, np.broadcast_shapes(Z.shape, np.shape(X)[:-1] + (self.d,)))


def _linear(d=1, a=0.0, c=0.0, f0=0.0, sigma=0.0, m=None, jump_scale=0.0):
    return Builtin(d=d, a=a, c=c, f0=f0, sigma=sigma, m=m or d, jump_scale=jump_scale, name="linear")


def _mean_reverting(d=1, theta=1.0, sigma=0.0, m=None, jump_scale=0.0, f0=0.0):
    return Builtin(d=d, a=theta, c=-theta, f0=f0, sigma=sigma, m=m or d, jump_scale=jump_scale, name="mean_reverting")


def _sin_kernel(d=1, kappa=1.0, c=0.0, sigma=0.0, m=None, jump_scale=0.0):
    return Builtin(d=d, kappa=kappa, c=c, sigma=sigma, m=m or d, jump_scale=jump_scale, name="sin_kernel")


REGISTRY = {"linear": _linear, "mean_reverting": _mean_reverting, "sin_kernel": _sin_kernel}


def make_coefficients(name, **params):
    if name not in REGISTRY:
        raise CoefficientError(f"unknown coefficient family {name!r}; choose from {sorted(REGISTRY)}")
    return REGISTRY[name](**params)
