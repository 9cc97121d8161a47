"""
Deterministic reflection problem in a time-dependent convex domain.

Given an input step path ``y`` with ``y_0 in D_0`` the solver returns the
pair ``(x, k)`` with ``x = y + k``, ``x_t in D_t`` and
``int <x - z, dk> <= 0`` for admissible ``z``. The time grid is the adaptive
partition on which ``y``, the anchor path and the domain each move by less
than ``1/n``; on that grid the solution is one projection per grid time::

    x_i = P_{D_{t_i}}(x_{i-1} + (y_{t_i} - y_{t_{i-1}})),    k_i = x_i - y_{t_i}
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domains import DomainFamily, _HausdorffCache, hausdorff_modulus
from .geometry import TOL_PROJ
from .paths import (
    CadlagPath,
    merge_times,
    running_pairing,
    running_variation,
    sup_norm,
    total_variation,
    uniform_distance,
)

__all__ = [
    "SkorokhodError",
    "SkorokhodSolution",
    "VerificationReport",
    "RefinementRow",
    "build_partition",
    "solve",
    "verify",
    "default_test_paths",
    "refinement_study",
    "stability_estimate",
    "TOL_ACTIVE",
]

TOL_ACTIVE = 1e-7


class SkorokhodError(ValueError):
    pass


@dataclass
class SkorokhodSolution:
    x: CadlagPath
    k: CadlagPath
    y_grid: CadlagPath
    partition: np.ndarray
    k_variation: float
    constraint_violation: float
    variation_constant: float
    n: int
    anchor: CadlagPath
    residuals: dict = field(default_factory=dict)


@dataclass
class VerificationReport:
    decomposition: float
    constraint: float
    pairing_max: float
    inactive_motion: float
    tol_vi: float
    n_test_paths: int
    passed: bool
    per_path: list = field(default_factory=list)

    def as_dict(self):
        return {
            "decomposition_residual": self.decomposition,
            "constraint_violation": self.constraint,
            "pairing_max": self.pairing_max,
            "inactive_motion": self.inactive_motion,
            "tol_vi": self.tol_vi,
            "n_test_paths": self.n_test_paths,
            "passed": self.passed,
        }


def _snap(t, horizon):
    return horizon if t >= horizon - 1e-12 * max(1.0, horizon) else t


def build_partition(y, family, a, n):
    """Adaptive grid: each step is at most ``1/n`` long and stops at the first
    time where ``y``, ``a`` or the domain (in Hausdorff distance) has moved by
    ``1/n`` or more since the step started."""
    if n < 1:
        raise SkorokhodError("n must be a positive integer")
    T = family.horizon
    h = 1.0 / n
    cand = merge_times(y.times, a.times, family.starts)
    cand = cand[(cand > 0) & (cand <= T)]
    Yc, Ac = y(cand), a(cand)
    Dc = family.index_at(cand)
    dh = _HausdorffCache()
    grid = [0.0]
    t = 0.0
    while t < T:
        lim = t + h
        j0 = np.searchsorted(cand, t, side="right")
        j1 = np.searchsorted(cand, lim, side="left")
        nxt = _snap(min(lim, T), T)
        if j1 > j0:
            y0, a0, d0 = y(t), a(t), int(family.index_at(t))
            hit = (np.linalg.norm(Yc[j0:j1] - y0, axis=1) >= h) | (np.linalg.norm(Ac[j0:j1] - a0, axis=1) >= h)
            moved = Dc[j0:j1] != d0
            if np.any(moved & ~hit):
                p0 = family.pieces[d0]
                for j in np.nonzero(moved & ~hit)[0]:
                    if dh(p0, family.pieces[Dc[j0 + j]]) >= h:
                        hit[j] = True
            if np.any(hit):
                nxt = min(nxt, float(cand[j0 + int(np.argmax(hit))]))
        grid.append(nxt)
        t = nxt
    return np.array(grid)


def solve(y, family, n, anchor=None, resolve_input=False, check=True):
    """Solve the reflection problem for the step path ``y`` in ``family``.

    Parameters
    ----------
    y : CadlagPath
        Input path with ``y_0 in D_0`` and ``y_T = y_{T-}``.
    family : DomainFamily
    n : int
        Partition fineness; every grid step is at most ``1/n``.
    anchor : CadlagPath, optional
        Interior path; defaults to ``family.anchor``.
    resolve_input : bool
        Also put every breakpoint of ``y`` and of the anchor on the grid. For
        step inputs this yields the exact solution.
    check : bool
        Validate the family and the anchor margin before solving.

    Returns
    -------
    SkorokhodSolution
    """
    if y.dim != family.dim:
        raise SkorokhodError("input and domain dimensions differ")
    if y.horizon != family.horizon:
        raise SkorokhodError("input and domain horizons differ")
    a = anchor if anchor is not None else family.anchor
    if check:
        if not y.continuous_at_horizon():
            raise SkorokhodError("input must satisfy y_T = y_{T-}")
        if not family.horizon_continuous():
            raise SkorokhodError("domain must satisfy D_T = D_{T-}")
        margin = family.anchor_margin(a)
        if not margin > 0:
            raise SkorokhodError(f"anchor margin must be positive, got {margin}")
    D0 = family.at(0.0)
    if D0.distance(y.values[0]) > 1e-9:
        raise SkorokhodError("y_0 is not in D_0")

    part = build_partition(y, family, a, n)
    extra = [family.starts]
    if resolve_input:
        extra += [y.times, a.times]
    grid = merge_times(part, *extra)
    Y = y(grid)
    idx = family.index_at(grid)
    X = np.empty_like(Y)
    K = np.zeros_like(Y)
    X[0] = Y[0]
    for i in range(1, grid.size):
        u = X[i - 1] + (Y[i] - Y[i - 1])
        X[i] = family.pieces[idx[i]].project(u)
        # accumulate increments so that k stays exactly constant off the boundary
        K[i] = K[i - 1] + (X[i] - u)
    viol = max(float(family.pieces[i].distance(v)) for i, v in zip(idx, X))
    x = CadlagPath(grid, X, y.horizon)
    k = CadlagPath(grid, K, y.horizon)
    kv = total_variation(k)
    bracket = sup_norm(y) ** 2 + sup_norm(a) ** 2 + 1.0
    return SkorokhodSolution(
        x=x,
        k=k,
        y_grid=CadlagPath(grid, Y, y.horizon),
        partition=part,
        k_variation=kv,
        constraint_violation=viol,
        variation_constant=kv / bracket,
        n=n,
        anchor=a,
        residuals={"constraint_violation": viol},
    )


def default_test_paths(sol, family, n_random=32, seed=0, n_times=16):
    """Finite surrogate for the admissible test paths.

    The anchor, ``n_random`` random step paths projected into the domain, and
    the solution moved halfway toward the anchor.
    """
    rng = np.random.default_rng(seed)
    T = family.horizon
    paths = [sol.anchor]
    boxes = [p.bounding_box() for p in family.pieces]
    lo = np.min([b[0] for b in boxes], axis=0)
    hi = np.max([b[1] for b in boxes], axis=0)
    pad = 0.2 * (hi - lo)
    for _ in range(n_random):
        times = merge_times([0.0], np.sort(rng.uniform(0, T, n_times)), family.starts)
        raw = rng.uniform(lo - pad, hi + pad, size=(times.size, family.dim))
        vals = np.array([family.at(t).project(v) for t, v in zip(times, raw)])
        paths.append(CadlagPath(times, vals, T))
    paths.append(sol.x + (sol.anchor - sol.x) * 0.5)
    return paths


def _check_admissible(z, family, tol=1e-9):
    g = merge_times(z.times, family.starts)
    idx = family.index_at(g)
    Z = z(g)
    worst = max(float(family.pieces[i].distance(v)) for i, v in zip(idx, Z))
    if worst > tol:
        raise SkorokhodError(f"test path leaves the domain (distance {worst:.3e})")


def verify(sol, y, family, test_paths=None, tol_proj=TOL_PROJ, tol_active=TOL_ACTIVE):
    """Check the three defining conditions on the solution grid.

    ``y`` is accepted for interface symmetry; the decomposition is checked
    against the grid restriction of ``y`` that the solver actually used.
    """
    if test_paths is None:
        test_paths = default_test_paths(sol, family)
    grid = sol.x.times
    X, K = sol.x.values, sol.k.values
    Y = y(grid)
    decomposition = float(np.max(np.linalg.norm(X - Y - K, axis=1)))
    idx = family.index_at(grid)
    constraint = max(float(family.pieces[i].distance(v)) for i, v in zip(idx, X))
    dK = np.linalg.norm(np.diff(K, axis=0), axis=1)
    depth = np.array([family.pieces[i].boundary_distance(v) for i, v in zip(idx[1:], X[1:])])
    inactive = float(np.max(dK[depth > tol_active], initial=0.0))
    tol_vi = 1e-8 * (1.0 + sol.k_variation)
    per_path = []
    for z in test_paths:
        _check_admissible(z, family)
        _, run = running_pairing(sol.x - z, sol.k)
        per_path.append(float(np.max(run)))
    pmax = max(per_path, default=0.0)
    passed = decomposition <= 1e-9 and constraint <= tol_proj and pmax <= tol_vi and inactive == 0.0
    return VerificationReport(decomposition, constraint, pmax, inactive, tol_vi, len(test_paths), passed, per_path)


@dataclass
class RefinementRow:
    n: int
    grid_size: int
    distance_to_finest: float
    k_variation: float
    distance_to_oracle: float | None = None


def refinement_study(y, family, n_list, oracle=None, anchor=None):
    """Solve for each ``n`` and compare against the finest level (and an
    optional oracle path)."""
    n_list = sorted(n_list)
    sols = [solve(y, family, n, anchor=anchor) for n in n_list]
    finest = sols[-1]
    rows = []
    for n, s in zip(n_list, sols):
        row = RefinementRow(n, s.x.times.size, uniform_distance(s.x, finest.x), s.k_variation)
        if oracle is not None:
            row.distance_to_oracle = uniform_distance(s.x, oracle)
        rows.append(row)
    return rows


def stability_estimate(sol1, family1, sol2, family2):
    """Both sides of the a-priori comparison estimate on the merged grid.

    For every merged grid time t returns ``lhs = |x_t - x'_t|^2`` and::

        rhs = |y_t - y'_t|^2 + 2 sup_{s<=t} d_H(D_s, D'_s) (|k|_t + |k'|_t)
              + 2 sum_{u<=t} <(y_t - y_u) - (y'_t - y'_u), dk_u - dk'_u>

    where ``y`` is the grid input each solution was computed from.
    """
    g = merge_times(sol1.x.times, sol2.x.times)
    lhs = np.sum((sol1.x(g) - sol2.x(g)) ** 2, axis=1)
    U = sol1.y_grid(g) - sol2.y_grid(g)
    V = sol1.k(g) - sol2.k(g)
    dV = np.diff(V, axis=0)
    inner = np.concatenate([[0.0], np.cumsum(np.einsum("ij,ij->i", U[1:], dV))])
    corr = np.einsum("ij,ij->i", U, V - V[0]) - inner
    tv1 = CadlagPath(sol1.k.times, running_variation(sol1.k), sol1.k.horizon)(g)[:, 0]
    tv2 = CadlagPath(sol2.k.times, running_variation(sol2.k), sol2.k.horizon)(g)[:, 0]
    mg, msup = hausdorff_modulus(family1, family2, running=True)
    M = msup[np.searchsorted(mg, g, side="right") - 1]
    rhs = np.sum(U**2, axis=1) + 2.0 * M * (tv1 + tv2) + 2.0 * corr
    return g, lhs, rhs
