"""
Bounded closed convex bodies with nonempty interior.

Four representations are supported: :class:`Ball`, :class:`Box`,
:class:`Polytope` (an H-representation ``A x <= b`` with unit row normals)
and :class:`Intersection`. Every set exposes metric projection, point-set
distance, the support function, a Chebyshev-style interior witness and the
distance of interior points to the boundary.

Projection onto polytopes is exact (KKT enumeration over active sets);
intersections containing balls fall back to Dykstra's algorithm.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import linprog, minimize

__all__ = [
    "ConvexSet",
    "Ball",
    "Box",
    "Polytope",
    "Intersection",
    "GeometryError",
    "ProjectionError",
    "project",
    "distance",
    "support",
    "hausdorff",
    "hausdorff_support_grid",
    "direction_grid",
    "TOL_PROJ",
    "MAX_ITER",
]

TOL_PROJ = 1e-10
MAX_ITER = 10_000

# Active-set enumeration is used while the number of candidate subsets stays below this.
_MAX_ACTIVE_SETS = 20_000


class GeometryError(ValueError):
    """Invalid convex set (empty interior, unbounded, malformed data)."""


class ProjectionError(RuntimeError):
    """Iterative projection did not converge."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


def _as_point(y, dim):
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != dim:
        raise GeometryError(f"point has dimension {y.shape[-1]}, set has dimension {dim}")
    return y


class ConvexSet:
    """Base class. Subclasses are immutable after construction."""

    dim: int

    # -- primitives implemented by subclasses --------------------------------

    def _project_one(self, y):
        raise NotImplementedError

    def support(self, u):
        raise NotImplementedError

    def chebyshev(self):
        """Return ``(center, radius)`` of a largest inscribed ball."""
        raise NotImplementedError

    def boundary_distance(self, a):
        """Distance from ``a`` to the boundary if ``a`` is inside, else 0."""
        raise NotImplementedError

    def key(self):
        """Hashable description of the representation."""
        raise NotImplementedError

    # -- derived ---------------------------------------------------------------

    def project(self, y):
        """Metric projection of ``y`` (shape ``(d,)`` or ``(n, d)``)."""
        y = _as_point(y, self.dim)
        if y.ndim == 1:
            return self._project_one(y)
        return self._project_many(y)

    def _project_many(self, ys):
        return np.array([self._project_one(y) for y in ys]).reshape(ys.shape)

    def distance(self, y):
        y = _as_point(y, self.dim)
        return np.linalg.norm(y - self.project(y), axis=-1)

    def contains(self, y, tol=1e-9):
        return bool(np.all(self.distance(y) <= tol))

    @cached_property
    def bounding_radius(self):
        """Radius r with the set contained in B(0, r)."""
        eye = np.eye(self.dim)
        hi = np.array([self.support(e) for e in eye])
        lo = np.array([-self.support(-e) for e in eye])
        return float(np.linalg.norm(np.maximum(np.abs(hi), np.abs(lo))))

    def bounding_box(self):
        eye = np.eye(self.dim)
        hi = np.array([self.support(e) for e in eye])
        lo = np.array([-self.support(-e) for e in eye])
        return lo, hi

    def same_as(self, other):
        return isinstance(other, ConvexSet) and self.key() == other.key()

    def __eq__(self, other):
        return self.same_as(other)

    def __hash__(self):
        return hash(self.key())


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if c.ndim != 1:
            raise GeometryError("ball center must be a vector")
        if not self.radius > 0 or not np.isfinite(self.radius):
            raise GeometryError(f"ball radius must be positive, got {self.radius}")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.shape[0]

    def _project_one(self, y):
        v = y - self.center
        n = np.linalg.norm(v)
        if n <= self.radius:
            return y.copy()
        return self.center + v * (self.radius / n)

    def _project_many(self, ys):
        v = ys - self.center
        n = np.linalg.norm(v, axis=1, keepdims=True)
        scale = np.where(n > self.radius, self.radius / np.maximum(n, 1e-300), 1.0)
        return self.center + v * scale

    def support(self, u):
        u = _as_point(u, self.dim)
        return float(u @ self.center + self.radius * np.linalg.norm(u))

    def chebyshev(self):
        return self.center.copy(), self.radius

    def boundary_distance(self, a):
        return max(0.0, self.radius - float(np.linalg.norm(np.asarray(a, float) - self.center)))

    def key(self):
        return ("ball", self.center.tobytes(), self.radius)


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise GeometryError("box bounds must be vectors of equal length")
        if not np.all(lo < hi):
            raise GeometryError("box requires lo < hi componentwise")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise GeometryError("box must be bounded")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.shape[0]

    def _project_one(self, y):
        return np.clip(y, self.lo, self.hi)

    def _project_many(self, ys):
        return np.clip(ys, self.lo, self.hi)

    def support(self, u):
        u = _as_point(u, self.dim)
        return float(np.sum(np.maximum(u * self.lo, u * self.hi)))

    def chebyshev(self):
        return 0.5 * (self.lo + self.hi), float(0.5 * np.min(self.hi - self.lo))

    def boundary_distance(self, a):
        a = np.asarray(a, float)
        return max(0.0, float(min(np.min(a - self.lo), np.min(self.hi - a))))

    def halfspaces(self):
        eye = np.eye(self.dim)
        return np.vstack([eye, -eye]), np.concatenate([self.hi, -self.lo])

    def key(self):
        return ("box", self.lo.tobytes(), self.hi.tobytes())


class Polytope(ConvexSet):
    """Bounded polyhedron ``{x : <a_j, x> <= b_j}``.

    Rows are rescaled to unit normals at construction. Boundedness and a
    nonempty interior are checked with linear programs.
    """

    def __init__(self, normals, offsets):
        A = np.atleast_2d(np.asarray(normals, dtype=float))
        b = np.atleast_1d(np.asarray(offsets, dtype=float))
        if A.shape[0] != b.shape[0]:
            raise GeometryError("need one offset per normal")
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0):
            raise GeometryError("zero normal in halfspace list")
        A = A / norms[:, None]
        b = b / norms
        A.setflags(write=False)
        b.setflags(write=False)
        self.A = A
        self.b = b
        self.dim = A.shape[1]
        for e in np.vstack([np.eye(self.dim), -np.eye(self.dim)]):
            res = linprog(-e, A_ub=A, b_ub=b, bounds=[(None, None)] * self.dim, method="highs")
            if res.status == 3:
                raise GeometryError("polytope is unbounded")
            if res.status == 2:
                raise GeometryError("polytope is empty")
        _, r = self.chebyshev()
        if r <= 1e-12:
            raise GeometryError("polytope has empty interior")

    @classmethod
    def from_vertices(cls, vertices):
        from scipy.spatial import ConvexHull

        hull = ConvexHull(np.asarray(vertices, dtype=float))
        eq = hull.equations
        return cls(eq[:, :-1], -eq[:, -1])

    def key(self):
        return ("polytope", self.A.tobytes(), self.b.tobytes())

    @cached_property
    def _cheb(self):
        m, d = self.A.shape
        c = np.zeros(d + 1)
        c[-1] = -1.0
        A_ub = np.hstack([self.A, np.ones((m, 1))])
        res = linprog(c, A_ub=A_ub, b_ub=self.b, bounds=[(None, None)] * d + [(0, None)], method="highs")
        if res.status != 0:
            raise GeometryError(f"Chebyshev LP failed: {res.message}")
        return res.x[:d], float(res.x[-1])

    def chebyshev(self):
        c, r = self._cheb
        return c.copy(), r

    def boundary_distance(self, a):
        return max(0.0, float(np.min(self.b - self.A @ np.asarray(a, float))))

    @cached_property
    def vertices(self):
        """Vertex list, or ``None`` when enumeration would be too large."""
        m, d = self.A.shape
        if _n_combinations(m, d) > _MAX_ACTIVE_SETS:
            return None
        verts = []
        scale = 1.0 + np.max(np.abs(self.b))
        for S in itertools.combinations(range(m), d):
            As = self.A[list(S)]
            if abs(np.linalg.det(As)) < 1e-12:
                continue
            v = np.linalg.solve(As, self.b[list(S)])
            if np.all(self.A @ v <= self.b + 1e-9 * scale):
                verts.append(v)
        return np.unique(np.round(np.array(verts), 12), axis=0)

    def support(self, u):
        u = _as_point(u, self.dim)
        V = self.vertices
        if V is not None:
            return float(np.max(V @ u))
        res = linprog(-u, A_ub=self.A, b_ub=self.b, bounds=[(None, None)] * self.dim, method="highs")
        if res.status != 0:
            raise GeometryError(f"support LP failed: {res.message}")
        return float(-res.fun)

    @cached_property
    def _active_sets(self):
        # Per subset size k: index arrays (n_S, k), A_S (n_S, k, d), G^{-1} (n_S, k, k).
        m, d = self.A.shape
        total = sum(_n_combinations(m, k) for k in range(1, d + 1))
        if total > _MAX_ACTIVE_SETS:
            return None
        groups = []
        for k in range(1, min(d, m) + 1):
            idx = []
            ginv = []
            for S in itertools.combinations(range(m), k):
                As = self.A[list(S)]
                G = As @ As.T
                if np.linalg.cond(G) > 1e12:
                    continue
                idx.append(S)
                ginv.append(np.linalg.inv(G))
            if idx:
                idx = np.array(idx)
                groups.append((idx, self.A[idx], np.array(ginv)))
        return groups

    def _project_one(self, y):
        scale = 1.0 + np.max(np.abs(self.b)) + np.max(np.abs(y))
        tol = 1e-12 * scale
        if np.all(self.A @ y <= self.b + tol):
            return y.copy()
        groups = self._active_sets
        if groups is None:
            return _dykstra([_Halfspace(a, bj) for a, bj in zip(self.A, self.b)], y)
        best = None
        best_d = np.inf
        for idx, AS, Ginv in groups:
            r = np.einsum("skd,d->sk", AS, y) - self.b[idx]
            lam = np.einsum("skl,sl->sk", Ginv, r)
            ok = np.all(lam >= -tol, axis=1)
            if not np.any(ok):
                continue
            x = y - np.einsum("skd,sk->sd", AS[ok], lam[ok])
            feas = np.all(x @ self.A.T <= self.b + tol, axis=1)
            if np.any(feas):
                x = x[feas]
                dist = np.linalg.norm(x - y, axis=1)
                j = int(np.argmin(dist))
                if dist[j] < best_d:
                    best, best_d = x[j], dist[j]
        if best is None:
            return _dykstra([_Halfspace(a, bj) for a, bj in zip(self.A, self.b)], y)
        return best

    def __repr__(self):
        return f"Polytope(m={self.A.shape[0]}, d={self.dim})"


class Intersection(ConvexSet):
    """Intersection of convex sets.

    Polyhedral members are merged into one :class:`Polytope`; if no ball
    remains, projection is exact. Otherwise Dykstra's algorithm is used.
    """

    def __init__(self, members, tol=TOL_PROJ, max_iter=MAX_ITER):
        flat = []
        for m in members:
            flat.extend(m.members if isinstance(m, Intersection) else [m])
        if not flat:
            raise GeometryError("empty intersection list")
        dims = {m.dim for m in flat}
        if len(dims) != 1:
            raise GeometryError(f"dimension mismatch among members: {sorted(dims)}")
        self.dim = dims.pop()
        self.members = tuple(flat)
        self.tol = tol
        self.max_iter = max_iter
        rows, offs, balls = [], [], []
        for m in flat:
            if isinstance(m, Box):
                A, b = m.halfspaces()
                rows.append(A)
                offs.append(b)
            elif isinstance(m, Polytope):
                rows.append(m.A)
                offs.append(m.b)
            elif isinstance(m, Ball):
                balls.append(m)
            else:
                raise GeometryError(f"unsupported member {type(m).__name__}")
        self._poly = Polytope(np.vstack(rows), np.concatenate(offs)) if rows else None
        self._balls = tuple(balls)
        _, r = self.chebyshev()
        if r <= 1e-9:
            raise GeometryError("intersection has empty interior")

    def key(self):
        return ("intersection",) + tuple(m.key() for m in self.members)

    @property
    def _parts(self):
        return ([self._poly] if self._poly is not None else []) + list(self._balls)

    def _project_one(self, y):
        parts = self._parts
        if len(parts) == 1:
            return parts[0]._project_one(y)
        if all(np.array_equal(p._project_one(y), y) for p in parts):
            return y.copy()
        return _dykstra(parts, y, self.tol, self.max_iter)

    def boundary_distance(self, a):
        return min(p.boundary_distance(a) for p in self._parts)

    def _constraints(self):
        cons = []
        if self._poly is not None:
            A, b = self._poly.A, self._poly.b
            cons.append({"type": "ineq", "fun": lambda x, A=A, b=b: b - A @ x, "jac": lambda x, A=A: -A})
        for ball in self._balls:
            c, R = ball.center, ball.radius
            cons.append(
                {
                    "type": "ineq",
                    "fun": lambda x, c=c, R=R: np.array([R * R - (x - c) @ (x - c)]),
                    "jac": lambda x, c=c: -2.0 * (x - c)[None, :],
                }
            )
        return cons

    @cached_property
    def _cheb(self):
        if not self._balls:
            return self._poly.chebyshev()
        # Kelley cutting planes: each ball constraint |x - c| <= R - r is the
        # intersection of its tangent cuts <u, x - c> + r <= R over unit u.
        d = self.dim
        rows, rhs = [], []
        if self._poly is not None:
            rows.append(np.hstack([self._poly.A, np.ones((self._poly.A.shape[0], 1))]))
            rhs.append(self._poly.b)
        for ball in self._balls:
            U = direction_grid(d) if d <= 3 else np.vstack([np.eye(d), -np.eye(d)])
            rows.append(np.hstack([U, np.ones((U.shape[0], 1))]))
            rhs.append(U @ ball.center + ball.radius)
        A_ub, b_ub = np.vstack(rows), np.concatenate(rhs)
        obj = np.zeros(d + 1)
        obj[-1] = -1.0
        bounds = [(None, None)] * d + [(0, None)]
        x, r = None, 0.0
        for _ in range(500):
            res = linprog(obj, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
            if res.status != 0:
                raise GeometryError(f"Chebyshev LP failed: {res.message}")
            x, r = res.x[:-1], res.x[-1]
            worst, cut = 0.0, None
            for ball in self._balls:
                v = x - ball.center
                nv = np.linalg.norm(v)
                excess = nv + r - ball.radius
                if excess > worst and nv > 0:
                    worst, cut = excess, (v / nv, ball)
            if cut is None or worst < 1e-7 * (1.0 + r):
                break
            u, ball = cut
            A_ub = np.vstack([A_ub, np.append(u, 1.0)])
            b_ub = np.append(b_ub, u @ ball.center + ball.radius)
        # the returned radius is certified from the member geometry, so a
        # slightly suboptimal center only costs a little margin
        return x, min(p.boundary_distance(x) for p in self._parts)

    def chebyshev(self):
        c, r = self._cheb
        return c.copy(), r

    def support(self, u):
        u = _as_point(u, self.dim)
        if not self._balls:
            return self._poly.support(u)
        x0, _ = self.chebyshev()
        res = minimize(
            lambda x: -u @ x, x0, jac=lambda x: -u, constraints=self._constraints(),
            method="SLSQP", options={"ftol": 1e-15, "maxiter": 1000},
        )
        x = self.project(res.x)
        return float(u @ x)

    def __repr__(self):
        return f"Intersection({', '.join(type(m).__name__ for m in self.members)})"


class _Halfspace:
    def __init__(self, a, b):
        self.a = a
        self.b = b

    def _project_one(self, y):
        s = self.a @ y - self.b
        return y - s * self.a if s > 0 else y.copy()

    def boundary_distance(self, y):
        return max(0.0, self.b - self.a @ y)


def _dykstra(parts, y, tol=TOL_PROJ, max_iter=MAX_ITER, strict=True):
    x = np.array(y, dtype=float)
    incs = [np.zeros_like(x) for _ in parts]
    residual = np.inf
    for _ in range(max_iter):
        change = 0.0
        for j, p in enumerate(parts):
            z = x + incs[j]
            x_new = p._project_one(z)
            inc = z - x_new
            # x alone can stall for a cycle while the corrections still move
            change = max(change, np.linalg.norm(x_new - x), np.linalg.norm(inc - incs[j]))
            incs[j] = inc
            x = x_new
        if change < tol:
            residual = max(np.linalg.norm(p._project_one(x) - x) for p in parts)
            if residual < tol:
                return x
    if strict:
        raise ProjectionError("Dykstra projection did not converge", residual)
    return x


def _n_combinations(m, k):
    from math import comb

    return comb(m, k)


# -- functional surface --------------------------------------------------------


def project(set_, y):
    return set_.project(y)


def distance(set_, y):
    return set_.distance(y)


def support(set_, u):
    """Support function ``sup_{x in set} <u, x>`` for a unit vector ``u``."""
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise GeometryError("support direction must have unit norm")
    return set_.support(u)


def direction_grid(dim, n_mc=4096, seed=0):
    """Deterministic unit directions used for support-function comparisons."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        th = 2 * np.pi * np.arange(64) / 64
        return np.column_stack([np.cos(th), np.sin(th)])
    if dim == 3:
        n = 512
        i = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * i / n)
        theta = np.pi * (1 + 5**0.5) * i
        return np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])
    g = np.random.default_rng(seed).standard_normal((n_mc, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def hausdorff_support_grid(a, b):
    """``max_u |h_a(u) - h_b(u)|`` over :func:`direction_grid`."""
    if a.dim != b.dim:
        raise GeometryError("dimension mismatch")
    U = direction_grid(a.dim)
    gap = np.array([abs(a.support(u) - b.support(u)) for u in U])
    best = float(gap.max())
    if a.dim != 2:
        return best
    # local refinement around the best coarse angles
    step = 2 * np.pi / U.shape[0]
    for j in np.argsort(gap)[-3:]:
        th0, width = np.arctan2(U[j, 1], U[j, 0]), step
        for _ in range(3):
            th = th0 + np.linspace(-width, width, 17)
            g = [abs(a.support(np.array([np.cos(x), np.sin(x)])) - b.support(np.array([np.cos(x), np.sin(x)])))
                 for x in th]
            i = int(np.argmax(g))
            best = max(best, float(g[i]))
            th0, width = th[i], width / 8
    return best


def hausdorff(a, b):
    """Hausdorff distance between two convex bodies.

    Ball/ball and box/box pairs use closed forms; everything else goes
    through the support-function grid, which is exact in one dimension and
    a lower bound converging with the grid otherwise.
    """
    if a.dim != b.dim:
        raise GeometryError("dimension mismatch")
    if a.same_as(b):
        return 0.0
    if isinstance(a, Ball) and isinstance(b, Ball):
        return float(np.linalg.norm(a.center - b.center) + abs(a.radius - b.radius))
    if isinstance(a, Box) and isinstance(b, Box):
        up = a.hi - b.hi
        down = b.lo - a.lo
        pos = np.maximum(np.maximum(up, down), 0.0)
        neg = np.maximum(np.maximum(-up, -down), 0.0)
        return float(max(np.linalg.norm(pos), np.linalg.norm(neg)))
    return hausdorff_support_grid(a, b)
