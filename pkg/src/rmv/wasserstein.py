"""
Second-order Wasserstein distances between equal-size empirical measures.

Uniform weights throughout. Point clouds use the Euclidean cost; path
ensembles use the uniform distance on ``[0, t]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .paths import CadlagPath, merge_times

__all__ = [
    "TransportResult",
    "WassersteinError",
    "EXACT_CAP",
    "w2_point_clouds",
    "w2_paths",
    "w2_upper_sup",
    "w2_from_cost",
    "sinkhorn",
    "sup_cost_matrix",
]

EXACT_CAP = 512
SINKHORN_ITERS = 500


class WassersteinError(ValueError):
    pass


@dataclass
class TransportResult:
    distance: float
    plan: np.ndarray
    method: str
    certified: bool

    def __float__(self):
        return self.distance


def _fsum_rows(c):
    return math.fsum(np.ravel(c))


def sinkhorn(cost, eps=None, iters=SINKHORN_ITERS):
    """Log-domain entropic transport between uniform measures.

    Returns ``(plan, transport_cost)`` where the cost excludes the entropy term.
    """
    C = np.asarray(cost, dtype=float)
    k = C.shape[0]
    if eps is None:
        med = float(np.median(C))
        eps = 0.01 * med if med > 0 else 1e-12
    log_a = np.full(k, -math.log(k))
    f = np.zeros(k)
    g = np.zeros(k)
    for _ in range(iters):
        f = eps * (log_a - logsumexp((g[None, :] - C) / eps, axis=1))
        g = eps * (log_a - logsumexp((f[:, None] - C) / eps, axis=0))
    P = np.exp((f[:, None] + g[None, :] - C) / eps)
    return P, _fsum_rows(P * C)


def w2_from_cost(cost, cap=EXACT_CAP):
    """W2 from a matrix of squared costs between two uniform k-point measures."""
    C = np.asarray(cost, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise WassersteinError("cost matrix must be square (equal sample sizes)")
    k = C.shape[0]
    if k == 0:
        raise WassersteinError("empty measures")
    if k <= cap:
        r, c = linear_sum_assignment(C)
        total = math.fsum(C[r, c]) / k
        return TransportResult(math.sqrt(max(total, 0.0)), c, "assignment", True)
    P, total = sinkhorn(C)
    return TransportResult(math.sqrt(max(total, 0.0)), P, "sinkhorn", False)


def _as_cloud(a):
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def w2_point_clouds(A, B, method="auto", cap=EXACT_CAP):
    """W2 between the empirical measures of the rows of ``A`` and ``B``.

    Parameters
    ----------
    A, B : array (k, d) or (k,)
    method : {"auto", "sort", "assignment", "sinkhorn"}
        ``auto`` sorts in 1D and uses assignment (or Sinkhorn above ``cap``)
        otherwise.
    """
    A, B = _as_cloud(A), _as_cloud(B)
    if A.shape != B.shape:
        raise WassersteinError(f"size mismatch {A.shape} vs {B.shape}")
    k, d = A.shape
    if method == "auto":
        method = "sort" if d == 1 else "assignment"
    if method == "sort":
        if d != 1:
            raise WassersteinError("sort method needs one-dimensional samples")
        ia, ib = np.argsort(A[:, 0], kind="stable"), np.argsort(B[:, 0], kind="stable")
        plan = np.empty(k, dtype=int)
        plan[ia] = ib
        total = math.fsum((A[ia, 0] - B[ib, 0]) ** 2) / k
        return TransportResult(math.sqrt(total), plan, "sort", True)
    # solve in a canonical argument order so the value is exactly symmetric
    swap = A.tobytes() > B.tobytes()
    if swap:
        A, B = B, A
    C = np.sum((A[:, None, :] - B[None, :, :]) ** 2, axis=-1)
    if method == "sinkhorn":
        P, total = sinkhorn(C)
        return TransportResult(math.sqrt(max(total, 0.0)), P.T if swap else P, "sinkhorn", False)
    if method != "assignment":
        raise WassersteinError(f"unknown method {method!r}")
    res = w2_from_cost(C, cap)
    if swap:
        res.plan = np.argsort(res.plan) if res.certified else res.plan.T
    return res


def sup_cost_matrix(VA, VB):
    """``C[i, j] = max_g |VA[i, g] - VB[j, g]|^2`` for arrays ``(k, G, d)``."""
    VA, VB = np.asarray(VA, dtype=float), np.asarray(VB, dtype=float)
    C = np.empty((VA.shape[0], VB.shape[0]))
    for i in range(VA.shape[0]):
        C[i] = np.max(np.sum((VA[i][None] - VB) ** 2, axis=-1), axis=1)
    return C


def _ensemble_values(A, B, t):
    if isinstance(A, np.ndarray) and isinstance(B, np.ndarray):
        return A, B
    A, B = list(A), list(B)
    if any(not isinstance(p, CadlagPath) for p in A + B):
        raise WassersteinError("path ensembles must be CadlagPath lists or (k, G, d) arrays")
    horizons = {p.horizon for p in A + B}
    if len(horizons) != 1:
        raise WassersteinError("paths must share a horizon")
    grid = merge_times(*[p.times for p in A + B])
    if t is not None:
        grid = grid[grid <= t]
    return np.stack([p(grid) for p in A]), np.stack([p(grid) for p in B])


def w2_paths(A, B, t=None, cap=EXACT_CAP):
    """W2 on path space with the sup metric over ``[0, t]``.

    ``A`` and ``B`` are lists of :class:`CadlagPath` or arrays ``(k, G, d)``
    already sampled on a common grid that contains every breakpoint.
    """
    VA, VB = _ensemble_values(A, B, t)
    if VA.shape != VB.shape:
        raise WassersteinError(f"size mismatch {VA.shape} vs {VB.shape}")
    return w2_from_cost(sup_cost_matrix(VA, VB), cap)


def w2_upper_sup(A, B, t=None):
    """Index-coupling upper bound ``(mean_i sup_s |A_i - B_i|^2)^{1/2}``."""
    VA, VB = _ensemble_values(A, B, t)
    if VA.shape != VB.shape:
        raise WassersteinError(f"size mismatch {VA.shape} vs {VB.shape}")
    per = np.max(np.sum((VA - VB) ** 2, axis=-1), axis=1)
    return math.sqrt(math.fsum(per) / per.size)
