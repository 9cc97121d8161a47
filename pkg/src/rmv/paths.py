"""
Piecewise-constant càdlàg paths on ``[0, T]``.

A path holds sorted breakpoints ``times[0] = 0 < times[1] < ...`` and one
value per breakpoint; the value is held on ``[times[j], times[j+1])``. A
breakpoint exactly at the horizon is allowed (it represents the value at
``T``), but solver inputs must satisfy ``y_T = y_{T-}``.
"""

from __future__ import annotations

import csv
import io

import numpy as np

__all__ = [
    "CadlagPath",
    "PathError",
    "merge_times",
    "sup_norm",
    "total_variation",
    "pairing_integral",
    "uniform_distance",
    "read_csv",
    "write_csv",
]


class PathError(ValueError):
    pass


def merge_times(*arrays):
    return np.unique(np.concatenate([np.asarray(a, dtype=float) for a in arrays]))


class CadlagPath:
    """Right-continuous step function with finitely many breakpoints."""

    __slots__ = ("times", "values", "horizon")

    def __init__(self, times, values, horizon):
        t = np.asarray(times, dtype=float).ravel()
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.size == 0 or t[0] != 0.0:
            raise PathError("path must start with a breakpoint at t=0")
        if v.shape[0] != t.size:
            raise PathError(f"{t.size} breakpoints but {v.shape[0]} values")
        if np.any(np.diff(t) <= 0):
            raise PathError("breakpoints must be strictly increasing")
        if not horizon > 0 or t[-1] > horizon:
            raise PathError("breakpoints must lie in [0, T]")
        t.setflags(write=False)
        v.setflags(write=False)
        self.times = t
        self.values = v
        self.horizon = float(horizon)

    @classmethod
    def constant(cls, value, horizon):
        return cls([0.0], np.atleast_1d(np.asarray(value, float))[None, :], horizon)

    @property
    def dim(self):
        return self.values.shape[1]

    def __len__(self):
        return self.times.size

    def __repr__(self):
        return f"CadlagPath(n={self.times.size}, d={self.dim}, T={self.horizon})"

    def index_at(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.horizon):
            raise PathError(f"time outside [0, {self.horizon}]")
        return np.searchsorted(self.times, t, side="right") - 1

    def __call__(self, t):
        return self.values[self.index_at(t)]

    def left_limit(self, t):
        """Value at ``t-`` (equal to the value at 0 for ``t = 0``)."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="left") - 1
        return self.values[np.maximum(idx, 0)]

    def on_grid(self, grid):
        """Restrict to the breakpoints ``grid`` (which must start at 0)."""
        grid = np.asarray(grid, dtype=float)
        return CadlagPath(grid, self(grid), self.horizon)

    def continuous_at_horizon(self, tol=0.0):
        if self.times[-1] < self.horizon:
            return True
        if self.times.size == 1:
            return True
        return bool(np.linalg.norm(self.values[-1] - self.values[-2]) <= tol)

    def jumps(self):
        """Breakpoints after 0 and the jump vectors there."""
        return self.times[1:], np.diff(self.values, axis=0)

    def _binary(self, other, op):
        if isinstance(other, CadlagPath):
            if abs(other.horizon - self.horizon) > 0:
                raise PathError("horizon mismatch")
            if other.dim != self.dim:
                raise PathError("dimension mismatch")
            g = merge_times(self.times, other.times)
            return CadlagPath(g, op(self(g), other(g)), self.horizon)
        return CadlagPath(self.times, op(self.values, np.asarray(other, float)), self.horizon)

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, c):
        return CadlagPath(self.times, self.values * float(c), self.horizon)

    __rmul__ = __mul__

    def __neg__(self):
        return CadlagPath(self.times, -self.values, self.horizon)


def sup_norm(p, t=None):
    """``sup_{s <= t} |p_s|`` (whole horizon by default)."""
    v = p.values if t is None else p.values[: p.index_at(t) + 1]
    return float(np.max(np.linalg.norm(v, axis=1)))


def total_variation(p, t=None):
    """Sum of jump norms over breakpoints in ``(0, t]``."""
    v = p.values if t is None else p.values[: p.index_at(t) + 1]
    if v.shape[0] < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(v, axis=0), axis=1)))


def running_variation(p):
    """Total variation on ``[0, times[j]]`` for every breakpoint."""
    inc = np.linalg.norm(np.diff(p.values, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(inc)])


def pairing_integral(f, k, t=None):
    """Stieltjes sum ``sum_{0 < u <= t} <f_u, k_u - k_{u-}>``.

    The integrand is taken at the jump time itself (``f_u``, not ``f_{u-}``).
    """
    if f.dim != k.dim:
        raise PathError("dimension mismatch")
    u, dk = k.jumps()
    if t is not None:
        keep = u <= t
        u, dk = u[keep], dk[keep]
    if u.size == 0:
        return 0.0
    return float(np.sum(np.einsum("ij,ij->i", f(u), dk)))


def running_pairing(f, k):
    """:func:`pairing_integral` evaluated at every breakpoint of ``k``."""
    u, dk = k.jumps()
    terms = np.einsum("ij,ij->i", f(u), dk) if u.size else np.zeros(0)
    return k.times, np.concatenate([[0.0], np.cumsum(terms)])


def uniform_distance(p, q, t=None):
    """``sup_{s <= t} |p_s - q_s|`` evaluated exactly on the merged breakpoints."""
    if abs(p.horizon - q.horizon) > 0:
        raise PathError("horizon mismatch")
    g = merge_times(p.times, q.times)
    if t is not None:
        g = g[g <= t]
    return float(np.max(np.linalg.norm(p(g) - q(g), axis=1)))


def write_csv(path, target=None, columns=None):
    """Write ``t, v1..vd`` rows (one per breakpoint). Returns the text."""
    names = columns or [f"v{j + 1}" for j in range(path.dim)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *names])
    for t, v in zip(path.times, path.values):
        w.writerow([repr(float(t)), *(repr(float(x)) for x in v)])
    text = buf.getvalue()
    if target is not None:
        with open(target, "w", newline="") as fh:
            fh.write(text)
    return text


def read_csv(source, horizon):
    """Read a path written by :func:`write_csv` (header required)."""
    with open(source, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0].strip() != "t":
        raise PathError(f"{source}: missing header 't, v1, ...'")
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    if data.size == 0:
        raise PathError(f"{source}: no rows")
    return CadlagPath(data[:, 0], data[:, 1:], horizon)
