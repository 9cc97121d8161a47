"""Time-dependent domains t -> D_t, piecewise constant in time."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ConvexSet, GeometryError, hausdorff
from .paths import CadlagPath, merge_times

__all__ = ["DomainFamily", "ValidationReport", "DomainError", "hausdorff_modulus"]


class DomainError(ValueError):
    pass


@dataclass
class ValidationReport:
    piece_status: list
    anchor_margin: float
    horizon_continuous: bool
    anchor_inside: bool
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.failures


class DomainFamily:
    """Piecewise-constant family of convex bodies on ``[0, T]``.

    Parameters
    ----------
    horizon : float
        Time horizon ``T``.
    starts : sequence of float
        Start times ``0 = s_0 < s_1 < ... <= T`` of the pieces.
    pieces : sequence of ConvexSet
        ``pieces[j]`` is active on ``[s_j, s_{j+1})``.
    anchor : CadlagPath, optional
        Interior path. When omitted, the per-piece Chebyshev centers are used.
    """

    def __init__(self, horizon, starts, pieces, anchor=None):
        starts = np.asarray(starts, dtype=float).ravel()
        pieces = tuple(pieces)
        if len(pieces) == 0 or len(pieces) != starts.size:
            raise DomainError("need one start time per piece")
        if starts[0] != 0.0 or np.any(np.diff(starts) <= 0) or starts[-1] > horizon:
            raise DomainError("piece start times must be increasing in [0, T] and begin at 0")
        dims = {p.dim for p in pieces}
        if len(dims) != 1:
            raise DomainError(f"pieces have different dimensions {sorted(dims)}")
        self.horizon = float(horizon)
        self.starts = starts
        self.pieces = pieces
        self.dim = dims.pop()
        if anchor is not None and (anchor.dim != self.dim or anchor.horizon != self.horizon):
            raise DomainError("anchor dimension/horizon does not match the family")
        self._anchor = anchor

    @classmethod
    def constant(cls, set_, horizon, anchor=None):
        return cls(horizon, [0.0], [set_], anchor)

    def __repr__(self):
        return f"DomainFamily(T={self.horizon}, pieces={len(self.pieces)}, d={self.dim})"

    def index_at(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.horizon):
            raise DomainError(f"time outside [0, {self.horizon}]")
        return np.searchsorted(self.starts, t, side="right") - 1

    def at(self, t):
        return self.pieces[int(self.index_at(t))]

    @property
    def breakpoints(self):
        return self.starts

    @property
    def anchor(self):
        return self._anchor if self._anchor is not None else self.auto_anchor()

    def auto_anchor(self):
        """Piecewise-constant path of per-piece Chebyshev centers."""
        centers = []
        for j, p in enumerate(self.pieces):
            c, r = p.chebyshev()
            if r <= 1e-12:
                raise GeometryError(f"piece {j} has numerically empty interior")
            centers.append(c)
        return CadlagPath(self.starts, np.array(centers), self.horizon)

    def anchor_margin(self, anchor=None):
        """``min_t d(A_t, boundary of D_t)``, evaluated on merged breakpoints."""
        a = anchor if anchor is not None else self.anchor
        grid = merge_times(self.starts, a.times)
        return float(min(self.at(t).boundary_distance(a(t)) for t in grid))

    def horizon_continuous(self):
        if self.starts[-1] < self.horizon or len(self.pieces) == 1:
            return True
        return self.pieces[-1].same_as(self.pieces[-2])

    def validate(self):
        status = []
        failures = []
        for j, p in enumerate(self.pieces):
            try:
                _, r = p.chebyshev()
                rad = p.bounding_radius
                ok = r > 0 and np.isfinite(rad)
                status.append({"piece": j, "interior_radius": r, "bounding_radius": rad, "ok": ok})
                if not ok:
                    failures.append(f"piece {j}: empty interior or unbounded")
            except GeometryError as exc:
                status.append({"piece": j, "ok": False, "error": str(exc)})
                failures.append(f"piece {j}: {exc}")
        try:
            margin = self.anchor_margin()
        except GeometryError as exc:
            margin = 0.0
            failures.append(f"anchor: {exc}")
        inside = margin > 0
        if not inside:
            failures.append("anchor margin is not positive")
        cont = self.horizon_continuous()
        if not cont:
            failures.append("D_T differs from D_{T-}")
        return ValidationReport(status, margin, cont, inside, failures)

    def restrict(self, grid):
        """Family frozen at the values on ``grid`` (left endpoints)."""
        grid = np.asarray(grid, dtype=float)
        grid = grid[grid < self.horizon] if grid.size > 1 else grid
        return DomainFamily(self.horizon, grid, [self.at(t) for t in grid])


class _HausdorffCache:
    def __init__(self):
        self._cache = {}

    def __call__(self, a, b):
        if a is b:
            return 0.0
        key = (id(a), id(b))
        if key not in self._cache:
            self._cache[key] = self._cache[(id(b), id(a))] = hausdorff(a, b)
        return self._cache[key]


def hausdorff_modulus(f1, f2, t=None, running=False):
    """``sup_{s <= t} d_H(D_s, D'_s)`` over the merged breakpoint grid.

    With ``running=True`` returns ``(grid, running_sup)``.
    """
    if f1.dim != f2.dim:
        raise DomainError("dimension mismatch")
    if f1.horizon != f2.horizon:
        raise DomainError("horizon mismatch")
    grid = merge_times(f1.starts, f2.starts)
    if t is not None:
        grid = grid[grid <= t]
    dh = _HausdorffCache()
    vals = np.array([dh(f1.at(s), f2.at(s)) for s in grid])
    if running:
        return grid, np.maximum.accumulate(vals)
    return float(vals.max())
