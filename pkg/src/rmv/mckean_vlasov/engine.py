"""
Interacting particle system with reflection.

Each coarse step ``[t_k, t_k + dt)`` is cut at every jump time of every
particle (and, optionally, at ``refine - 1`` equally spaced points). On each
sub-interval ``[s, s')``::

    u_i   = x_i + b(s, x_i, mu) ds + sigma(s, x_i, mu) dW_i - ds * E beta(s, x_i, mu, .)
            (+ beta(s, x_i, mu, z) if particle i jumps at s')
    x_i'  = P_{D_{s'}}(u_i),      dK_i = x_i' - u_i

with ``mu`` the measure at ``s`` (the ensemble itself, or a frozen law flow).
Brownian increments on sub-intervals are bridge samples pinned to the coarse
increment, so adding cut points never changes the coarse-step noise.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from ..drivers import CH_INIT, NoiseConfig, brownian_bridge, brownian_increments, poisson_jumps, uniforms
from ..geometry import TOL_PROJ
from ..paths import CadlagPath, merge_times
from .coefficients import EmpiricalMeasure

__all__ = [
    "ParticleEnsemble",
    "Trajectories",
    "LawFlow",
    "InitialLaw",
    "SimulationError",
    "euler_reflect_step",
    "simulate_system",
    "verification_paths",
]


class SimulationError(RuntimeError):
    pass


@dataclass
class ParticleEnsemble:
    t: float
    X: np.ndarray
    K: np.ndarray
    Kvar: np.ndarray
    ids: np.ndarray

    @classmethod
    def start(cls, X0, ids=None):
        X0 = np.atleast_2d(np.asarray(X0, dtype=float))
        n = X0.shape[0]
        ids = np.arange(n, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
        return cls(0.0, X0.copy(), np.zeros_like(X0), np.zeros(n), ids)

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def measure(self):
        return EmpiricalMeasure(self.X)


class LawFlow:
    """Time-indexed empirical laws, right-continuous between grid times."""

    def __init__(self, grid, values):
        self.grid = np.asarray(grid, dtype=float)
        self.values = np.asarray(values, dtype=float)  # (M, G, d)
        self._cache = {}

    @classmethod
    def constant(cls, X0):
        return cls([0.0], np.asarray(X0, dtype=float)[:, None, :])

    @property
    def M(self):
        return self.values.shape[0]

    def index(self, t):
        return int(np.searchsorted(self.grid, t, side="right") - 1)

    def at(self, t):
        j = self.index(t)
        if j not in self._cache:
            self._cache[j] = EmpiricalMeasure(self.values[:, j])
        return self._cache[j]

    def on_grid(self, grid):
        idx = np.searchsorted(self.grid, grid, side="right") - 1
        return self.values[:, idx]


@dataclass
class InitialLaw:
    """Initial law, sampled from the counter-based streams and projected into ``D_0``.

    kind : "point" (``x0``), "gaussian" (``mean``, ``scale``) or "uniform_box"
    (``lo``, ``hi``).
    """

    kind: str = "point"
    params: dict = field(default_factory=dict)

    def sample(self, seed, ids, family):
        ids = np.asarray(ids, dtype=np.int64)
        d = family.dim
        u = uniforms(seed, ids[:, None], 0, CH_INIT, np.arange(d))
        p = self.params
        if self.kind == "point":
            X = np.tile(np.asarray(p.get("x0", np.zeros(d)), dtype=float), (ids.size, 1))
        elif self.kind == "gaussian":
            X = np.asarray(p.get("mean", np.zeros(d)), dtype=float) + float(p.get("scale", 1.0)) * ndtri(u)
        elif self.kind == "uniform_box":
            lo, hi = np.asarray(p["lo"], dtype=float), np.asarray(p["hi"], dtype=float)
            X = lo + (hi - lo) * u
        else:
            raise SimulationError(f"unknown initial law {self.kind!r}")
        return family.at(0.0).project(X)

    @staticmethod
    def perturbation(seed, ids, d):
        """Standard normal vectors on a separate counter range (for ``X_0 + xi / n``)."""
        ids = np.asarray(ids, dtype=np.int64)
        return ndtri(uniforms(seed, ids[:, None], 1, CH_INIT, np.arange(d)))


def _by_rows(fn, n, threads):
    if threads <= 1 or n < 2 * threads:
        return fn(slice(0, n))
    bounds = np.linspace(0, n, threads + 1).astype(int)
    sl = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ThreadPoolExecutor(threads) as ex:
        parts = list(ex.map(fn, sl))
    return tuple(np.concatenate(p) for p in zip(*parts))


def _advance(X, K, Kvar, s, s_new, ds, dW, jump_rows, jump_z, coeffs, D, noise, mu, threads):
    lam = noise.intensity if noise is not None else 0.0
    marks = noise.marks if noise is not None else None
    comp_const = None
    if lam > 0 and coeffs.jump_state_free:
        comp_const = coeffs.compensator(s, X[:1], mu, lam, marks)
    jump_add = np.zeros_like(X)
    if jump_rows.size:
        np.add.at(jump_add, jump_rows, coeffs.jump(s, X[jump_rows], mu, jump_z))

    def rows(sl):
        x = X[sl]
        u = x + coeffs.drift(s, x, mu) * ds
        if dW is not None:
            u = u + coeffs.noise_term(s, x, mu, dW[sl])
        if lam > 0:
            comp = comp_const if comp_const is not None else coeffs.compensator(s, x, mu, lam, marks)
            u = u - ds * comp
        u = u + jump_add[sl]
        xn = D.project(u)
        return xn, xn - u

    Xn, dK = _by_rows(rows, X.shape[0], threads)
    if not np.all(np.isfinite(Xn)):
        bad = np.nonzero(~np.all(np.isfinite(Xn), axis=1))[0]
        raise SimulationError(f"non-finite state at t={s_new:.6g} for particles {bad[:10].tolist()}")
    return Xn, K + dK, Kvar + np.linalg.norm(dK, axis=1)


def euler_reflect_step(ens, coeffs, family, dt, noise=None, step=0, dW=None, jumps=None, mu=None, threads=1):
    """One Euler step followed by one projection onto ``D_{t+dt}``.

    Coefficients are frozen at the step start (state and empirical measure).
    Noise is drawn from ``noise`` with key ``step`` unless ``dW`` (shape
    ``(N, m)``) and ``jumps`` (``(rows, marks)``) are given; jumps in the
    step are applied at its end.
    """
    if dt <= 0:
        raise SimulationError("dt must be positive")
    t, t_new = ens.t, ens.t + dt
    if family.horizon < t_new <= family.horizon * (1 + 1e-12):
        t_new = family.horizon
    mu = ens.measure() if mu is None else mu
    if dW is None and noise is not None and noise.brownian_dim > 0:
        dW = brownian_increments(noise.seed, ens.ids, step, dt, noise.brownian_dim)
    if jumps is None:
        if noise is not None and noise.intensity > 0:
            owner, _, z = poisson_jumps(noise.seed, ens.ids, step, t, dt, noise.intensity, noise.marks)
            jumps = (owner, z)
        else:
            jumps = (np.zeros(0, dtype=int), np.zeros((0, ens.d)))
    X, K, Kv = _advance(ens.X, ens.K, ens.Kvar, t, t_new, dt, dW, np.asarray(jumps[0]), np.asarray(jumps[1]),
                        coeffs, family.at(t_new), noise, mu, threads)
    return ParticleEnsemble(t_new, X, K, Kv, ens.ids)


@dataclass
class Trajectories:
    """Particle paths on a shared grid.

    ``X``, ``K`` have shape ``(N, G, d)``; ``Kvar`` is the running total
    variation of each ``K``, shape ``(N, G)``.
    """

    grid: np.ndarray
    X: np.ndarray
    K: np.ndarray
    Kvar: np.ndarray
    ids: np.ndarray
    horizon: float
    n_jumps: int = 0
    residuals: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.X.shape[0]

    def path(self, i):
        return CadlagPath(self.grid, self.X[i], self.horizon)

    def k_path(self, i):
        return CadlagPath(self.grid, self.K[i], self.horizon)

    def at(self, t):
        j = int(np.searchsorted(self.grid, t, side="right") - 1)
        return self.X[:, j]

    def law(self):
        return LawFlow(self.grid, self.X)

    def digest(self):
        h = hashlib.sha256()
        for a in (self.grid, self.X, self.K):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


def verification_paths(family, n_random=32, seed=0, n_times=16):
    """Anchor plus ``n_random`` random step paths projected into the domains."""
    rng = np.random.default_rng(seed)
    T = family.horizon
    paths = [family.anchor]
    boxes = [p.bounding_box() for p in family.pieces]
    lo = np.min([b[0] for b in boxes], axis=0)
    hi = np.max([b[1] for b in boxes], axis=0)
    for _ in range(n_random):
        times = merge_times([0.0], np.sort(rng.uniform(0, T, n_times)), family.starts)
        raw = rng.uniform(lo, hi, size=(times.size, family.dim))
        paths.append(CadlagPath(times, np.array([family.at(t).project(v) for t, v in zip(times, raw)]), T))
    return paths


def _residuals(traj, family, n_test):
    grid = traj.grid
    idx = family.index_at(grid)
    constraint = 0.0
    for j in np.unique(idx):
        cols = np.nonzero(idx == j)[0]
        pts = traj.X[:, cols].reshape(-1, traj.X.shape[2])
        constraint = max(constraint, float(np.max(family.pieces[j].distance(pts))))
    dK = np.diff(traj.K, axis=1)
    Xn = traj.X[:, 1:]
    worst = -np.inf
    for z in verification_paths(family, n_random=n_test):
        Z = z(grid[1:])
        run = np.cumsum(np.einsum("ngd,ngd->ng", Xn - Z[None], dK), axis=1)
        worst = max(worst, float(np.max(run, initial=0.0)))
    tol_vi = 1e-8 * (1.0 + float(np.max(traj.Kvar[:, -1])))
    return {
        "constraint_violation": constraint,
        "pairing_max": worst,
        "tol_vi": tol_vi,
        "n_test_paths": n_test + 1,
        "passed": bool(constraint <= TOL_PROJ and worst <= tol_vi),
    }


def simulate_system(coeffs, family, X0, T, steps, noise=None, ids=None, law=None, refine=1, threads=1,
                    record_residuals=True, n_test=32):
    """Simulate the interacting system (or independent particles against ``law``).

    Parameters
    ----------
    coeffs : CoefficientSet
    family : DomainFamily
    X0 : array (N, d)
        Initial states, inside ``D_0``.
    T : float
        Horizon; must equal ``family.horizon``.
    steps : int
        Number of coarse steps of length ``T / steps``.
    noise : NoiseConfig, optional
    ids : array of int, optional
        Stream id per particle (defaults to ``0..N-1``).
    law : LawFlow, optional
        Frozen law used in place of the empirical measure of the ensemble.
    refine : int
        Extra equally spaced cut points per coarse step (1 = none).
    threads : int
        Worker threads for per-particle work; never changes results.

    Returns
    -------
    Trajectories
    """
    if steps < 1 or refine < 1:
        raise SimulationError("steps and refine must be positive integers")
    if abs(T - family.horizon) > 1e-12:
        raise SimulationError("horizon differs from the domain family")
    noise = noise if noise is not None else NoiseConfig(0)
    ens = ParticleEnsemble.start(X0, ids)
    if family.at(0.0).distance(ens.X).max() > 1e-9:
        raise SimulationError("initial states must lie in D_0")
    N, d = ens.X.shape
    m = noise.brownian_dim
    dt = T / steps
    grid, Xs, Ks, Kvs = [0.0], [ens.X], [ens.K], [ens.Kvar]
    X, K, Kv = ens.X, ens.K, ens.Kvar
    n_jumps = 0
    base_cuts = np.arange(1, refine) / refine
    for k in range(steps):
        t0 = k * dt
        t1 = T if k == steps - 1 else (k + 1) * dt
        if noise.intensity > 0:
            owner, jt, z = poisson_jumps(noise.seed, ens.ids, k, t0, dt, noise.intensity, noise.marks)
        else:
            owner, jt, z = np.zeros(0, dtype=int), np.zeros(0), np.zeros((0, d))
        n_jumps += owner.size
        fr = np.unique(np.concatenate([(jt - t0) / dt, base_cuts]))
        fr = fr[(fr > 0) & (fr < 1)]
        ends = np.append(t0 + fr * dt, t1)
        dW = brownian_bridge(noise.seed, ens.ids, k, dt, m, np.tile(fr, (N, 1))) if m > 0 else None
        slot = np.minimum(np.searchsorted(ends, jt, side="left"), ends.size - 1)
        s = t0
        for j, s_new in enumerate(ends):
            mu = law.at(s) if law is not None else EmpiricalMeasure(X)
            hit = slot == j
            X, K, Kv = _advance(X, K, Kv, s, s_new, s_new - s, None if dW is None else dW[:, j], owner[hit], z[hit],
                                coeffs, family.at(s_new), noise, mu, threads)
            grid.append(s_new)
            Xs.append(X)
            Ks.append(K)
            Kvs.append(Kv)
            s = s_new
    traj = Trajectories(
        np.array(grid),
        np.stack(Xs, axis=1),
        np.stack(Ks, axis=1),
        np.stack(Kvs, axis=1),
        ens.ids,
        T,
        n_jumps,
    )
    if record_residuals:
        traj.residuals = _residuals(traj, family, n_test)
    return traj
