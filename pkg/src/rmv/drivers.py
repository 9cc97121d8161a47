"""
Reproducible Brownian and compound-Poisson drivers.

Every random number is a pure function of ``(seed, stream, step, channel,
index)`` through a counter-based hash, so results do not depend on the order
in which particles or steps are generated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import poisson, qmc

__all__ = [
    "Stream",
    "NoiseConfig",
    "MarkDistribution",
    "TwoPoint",
    "Discrete",
    "Gaussian",
    "UniformBall",
    "make_marks",
    "uniforms",
    "normals",
    "brownian_increments",
    "brownian_bridge",
    "poisson_jumps",
    "compensator",
    "compensated_jump_sum",
    "CompensatorWarning",
    "DriverError",
]

# channel ids; disjoint counter ranges for each use
CH_BM, CH_BRIDGE, CH_COUNT, CH_TIME, CH_MARK, CH_INIT = range(6)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


class DriverError(ValueError):
    pass


class CompensatorWarning(RuntimeWarning):
    pass


def _mix(z):
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def _hash(seed, *fields):
    with np.errstate(over="ignore"):
        h = _mix(np.uint64(seed) + _GOLDEN)
        for f in fields:
            f = np.asarray(f).astype(np.uint64)
            h = _mix((h ^ f) * _GOLDEN + _GOLDEN)
    return h


def uniforms(seed, stream, step, channel, index):
    """Uniforms in the open interval (0, 1); arguments broadcast."""
    # 52 bits so that the largest value 1 - 2^-53 is exactly representable
    bits = _hash(seed, stream, step, channel, index) >> np.uint64(12)
    return (bits.astype(np.float64) + 0.5) * 2.0**-52


def normals(seed, stream, step, channel, index):
    return ndtri(uniforms(seed, stream, step, channel, index))


@dataclass(frozen=True)
class Stream:
    """Value-like handle on one substream (typically one particle)."""

    seed: int
    stream: int

    def uniforms(self, step, channel, size):
        return uniforms(self.seed, self.stream, step, channel, np.arange(size))

    def normals(self, step, channel, size):
        return normals(self.seed, self.stream, step, channel, np.arange(size))


# ---------------------------------------------------------------- marks


class MarkDistribution:
    """Law of a jump mark, sampled from uniforms so draws stay counter-based."""

    dim: int
    n_uniforms: int
    discrete = False

    def sample(self, u):
        raise NotImplementedError

    def nodes(self):
        """Quadrature ``(points, weights)`` for the mark law (weights sum to 1)."""
        raise NotImplementedError

    def coarse_nodes(self):
        """Cheaper rule used only to estimate quadrature error."""
        return None

    @property
    def quad_tol(self):
        # relative tolerance on the coarse/fine disagreement
        return 1e-6 if self.dim == 1 else 1e-2


class Discrete(MarkDistribution):
    discrete = True

    def __init__(self, values, probs=None):
        v = np.asarray(values, dtype=float)
        self.values = v.reshape(len(v), -1)
        k = self.values.shape[0]
        p = np.full(k, 1.0 / k) if probs is None else np.asarray(probs, dtype=float)
        if p.shape != (k,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise DriverError("discrete mark probabilities must be a distribution")
        if np.any(np.linalg.norm(self.values, axis=1) == 0):
            raise DriverError("marks must be non-zero")
        self.probs = p / p.sum()
        self._cdf = np.cumsum(self.probs)
        self._cdf[-1] = 1.0
        self.dim = self.values.shape[1]
        self.n_uniforms = 1

    def sample(self, u):
        j = np.searchsorted(self._cdf, u[..., 0], side="right")
        return self.values[np.minimum(j, len(self.probs) - 1)]

    def nodes(self):
        return self.values, self.probs


class TwoPoint(Discrete):
    def __init__(self, a=-1.0, b=1.0, p=0.5):
        super().__init__([np.atleast_1d(a), np.atleast_1d(b)], [p, 1 - p])


class _Continuous(MarkDistribution):
    n_qmc = 10_000

    def _inverse(self, u):
        raise NotImplementedError

    def sample(self, u):
        return self._inverse(u)

    def nodes(self):
        if self.dim == 1:
            return self._gauss_legendre(64)
        return self._sobol(self.n_qmc, 0)

    def coarse_nodes(self):
        if self.dim == 1:
            return self._gauss_legendre(32)
        return self._sobol(self.n_qmc // 2, 1)

    def _gauss_legendre(self, k):
        x, w = np.polynomial.legendre.leggauss(k)
        return self._inverse(((x + 1) / 2)[:, None]), w / 2

    def _sobol(self, k, seed):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            u = qmc.Sobol(self.n_uniforms, scramble=True, seed=seed).random(k)
        u = np.clip(u, 2.0**-54, 1 - 2.0**-53)
        return self._inverse(u), np.full(k, 1.0 / k)


class Gaussian(_Continuous):
    def __init__(self, mean, scale=1.0):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.dim = self.mean.size
        s = np.asarray(scale, dtype=float)
        self.chol = np.linalg.cholesky(s) if s.ndim == 2 else np.eye(self.dim) * s
        self.n_uniforms = self.dim

    def _inverse(self, u):
        return self.mean + ndtri(u) @ self.chol.T

    def _gauss_legendre(self, k):
        # density-weighted rule on [-8, 8] standard deviations; the mass outside is < 1e-15
        x, w = np.polynomial.legendre.leggauss(k)
        g = 8.0 * x
        w = 8.0 * w * np.exp(-0.5 * g**2) / np.sqrt(2 * np.pi)
        return self.mean + g[:, None] * self.chol[0, 0], w / w.sum()


class UniformBall(_Continuous):
    """Uniform on the ball of given radius around ``center``."""

    def __init__(self, center, radius=1.0):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)
        self.dim = self.center.size
        self.n_uniforms = self.dim + 1

    def _inverse(self, u):
        if self.dim == 1:
            return self.center + self.radius * (2 * u[..., :1] - 1)
        g = ndtri(u[..., : self.dim])
        g /= np.linalg.norm(g, axis=-1, keepdims=True)
        r = self.radius * u[..., self.dim : self.dim + 1] ** (1.0 / self.dim)
        return self.center + r * g


def make_marks(name, **params):
    """Mark distribution by name: two_point, gaussian, uniform_ball, discrete."""
    table = {"two_point": TwoPoint, "gaussian": Gaussian, "uniform_ball": UniformBall, "discrete": Discrete}
    if name not in table:
        raise DriverError(f"unknown mark distribution {name!r}")
    return table[name](**params)


@dataclass
class NoiseConfig:
    """Brownian dimension, jump intensity and mark law, plus the seed."""

    brownian_dim: int
    intensity: float = 0.0
    marks: MarkDistribution | None = None
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.brownian_dim < 0:
            raise DriverError("brownian_dim must be non-negative")
        if not (np.isfinite(self.intensity) and self.intensity >= 0):
            raise DriverError("jump intensity must be finite and non-negative")
        if self.intensity > 0 and self.marks is None:
            raise DriverError("positive intensity needs a mark distribution")


# ---------------------------------------------------------------- drivers


def brownian_increments(seed, stream, step, dt, m):
    """``N(0, dt I_m)`` increments; ``stream`` may be an array of particle ids.

    Returns shape ``(m,)`` for scalar ``stream`` and ``(len(stream), m)`` otherwise.
    """
    if dt <= 0:
        raise DriverError("dt must be positive")
    s = np.asarray(stream)
    z = normals(seed, s[..., None], step, CH_BM, np.arange(m))
    return np.sqrt(dt) * z


def brownian_bridge(seed, stream, step, dt, m, fractions):
    """Increments of W over the sub-intervals of ``[0, dt]`` cut at ``fractions``.

    The total over the step equals :func:`brownian_increments` for the same
    keys, so inserting cut points never changes the step increment.

    Parameters
    ----------
    fractions : array (n_streams, k)
        Interior cut points in ``(0, 1)``, sorted per row; pad with ``nan``.

    Returns
    -------
    array (n_streams, k + 1, m)
        Increments over ``[0, f_1], [f_1, f_2], ..., [f_last, 1]`` (scaled by dt);
        padded slots carry zero increments.
    """
    s = np.atleast_1d(np.asarray(stream))
    f = np.atleast_2d(np.asarray(fractions, dtype=float))
    n, k = f.shape
    total = brownian_increments(seed, s, step, dt, m)
    out = np.zeros((n, k + 1, m))
    w_prev = np.zeros((n, m))
    s_prev = np.zeros(n)
    for j in range(k):
        fj = f[:, j]
        live = ~np.isnan(fj)
        if not live.any():
            break
        fj = np.where(live, fj, s_prev)
        gap = np.maximum(1.0 - s_prev, 1e-300)
        lam = (fj - s_prev) / gap
        mean = w_prev + lam[:, None] * (total - w_prev)
        var = dt * (fj - s_prev) * (1.0 - fj) / gap
        z = normals(seed, s[:, None], step, CH_BRIDGE, j * m + np.arange(m))
        w = np.where(live[:, None], mean + np.sqrt(np.maximum(var, 0))[:, None] * z, w_prev)
        out[:, j] = w - w_prev
        w_prev, s_prev = w, fj
    out[:, k] = total - w_prev
    return out


def poisson_jumps(seed, stream, step, t, dt, intensity, marks):
    """Jumps of the compound Poisson driver on ``[t, t + dt)``.

    Returns ``(owner, times, z)``: the position of the owning entry in
    ``stream`` for each jump, jump times (sorted within each owner) and marks.
    """
    if dt <= 0:
        raise DriverError("dt must be positive")
    s = np.atleast_1d(np.asarray(stream))
    if intensity == 0 or marks is None:
        return np.zeros(0, dtype=int), np.zeros(0), np.zeros((0, marks.dim if marks else 1))
    u = uniforms(seed, s, step, CH_COUNT, 0)
    counts = poisson.ppf(u, intensity * dt).astype(np.int64)
    owner = np.repeat(np.arange(s.size), counts)
    if owner.size == 0:
        return owner, np.zeros(0), np.zeros((0, marks.dim))
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    j = np.arange(owner.size) - starts[owner]
    times = t + dt * uniforms(seed, s[owner], step, CH_TIME, j)
    ku = marks.n_uniforms
    mu = uniforms(seed, s[owner][:, None], step, CH_MARK, j[:, None] * ku + np.arange(ku))
    z = marks.sample(mu)
    order = np.lexsort((times, owner))
    return owner[order], times[order], z[order]


def compensator(beta, intensity, marks, tol=None):
    """``intensity * int beta(z) law(dz)`` and an error estimate.

    ``beta`` maps marks of shape ``(q, d)`` to values of shape ``(..., q, p)``.
    Exact for discrete marks; 64-node Gauss-Legendre in 1D and frozen Sobol
    nodes otherwise. A :class:`CompensatorWarning` is issued when a coarser
    rule disagrees by more than ``tol`` (relative; defaults to 1e-6 for
    Gauss-Legendre and 1e-2 for quasi-Monte Carlo).
    """
    if intensity == 0 or marks is None:
        return 0.0, 0.0
    tol = marks.quad_tol if tol is None else tol
    z, w = marks.nodes()
    val = intensity * np.tensordot(beta(z), w, axes=([-2], [0]))
    err = 0.0
    coarse = marks.coarse_nodes()
    if coarse is not None:
        zc, wc = coarse
        vc = intensity * np.tensordot(beta(zc), wc, axes=([-2], [0]))
        err = float(np.max(np.abs(val - vc), initial=0.0))
        scale = 1.0 + float(np.max(np.abs(val), initial=0.0))
        if err > tol * scale:
            warnings.warn(f"compensator quadrature not converged (estimate {err:.2e})", CompensatorWarning)
    return val, err


def compensated_jump_sum(jump_values, beta, intensity, marks, dt):
    """``sum_j beta(z_j) - dt * intensity * E beta(z)`` for one interval.

    ``jump_values`` are ``beta`` already evaluated at the realized marks,
    shape ``(n_jumps, p)``.
    """
    comp, _ = compensator(beta, intensity, marks)
    jv = np.asarray(jump_values, dtype=float)
    total = jv.sum(axis=0) if jv.size else 0.0
    return total - dt * np.asarray(comp)
