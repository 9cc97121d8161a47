"""Fixed-point iteration on the law: mu_{k+1} = law of the solution driven by mu_k."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..wasserstein import EXACT_CAP, w2_paths, w2_upper_sup
from .engine import LawFlow, simulate_system

__all__ = ["PicardResult", "ContractionWarning", "picard_solve", "law_distance"]


class ContractionWarning(RuntimeWarning):
    pass


@dataclass
class PicardResult:
    law: LawFlow
    trajectories: object
    trace: list
    converged: bool
    contraction_failure: bool = False
    diagnostic: str | None = None
    metric: str = "w2_paths"
    ratios: list = field(default_factory=list)

    @property
    def iterations(self):
        return len(self.trace)


def law_distance(l1, l2, cap=EXACT_CAP):
    """W_T between two law flows sampled by index-matched paths.

    Exact assignment on the sup metric for ``M <= cap``; above the cap the
    index-coupling upper bound is returned instead.
    """
    grid = np.union1d(l1.grid, l2.grid)
    A, B = l1.on_grid(grid), l2.on_grid(grid)
    if A.shape[0] <= cap:
        return w2_paths(A, B).distance, "w2_paths"
    return w2_upper_sup(A, B), "w2_upper_sup"


def picard_solve(coeffs, family, X0, T, steps, noise=None, ids=None, max_iters=50, tol_w=1e-12, threads=1,
                 cap=EXACT_CAP, patience=3):
    """Iterate the law map from the constant flow ``mu_0 = law(X0)``.

    Driver streams are frozen across iterations, so each iterate is a
    deterministic function of the previous law. Stops when the W_T distance
    between consecutive laws drops to ``tol_w``, at ``max_iters``, or when the
    trace fails to decrease over ``patience`` consecutive iterations (a
    :class:`ContractionWarning` is issued and ``contraction_failure`` set).

    Returns
    -------
    PicardResult
        ``trace[k] = W_T(mu_k, mu_{k+1})``.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    if X0.shape[0] < 2:
        raise ValueError("picard_solve needs at least two sample paths")
    law = LawFlow.constant(X0)
    trace, ratios = [], []
    traj = None
    metric = "w2_paths"
    flat = 0
    for _ in range(max_iters):
        traj = simulate_system(coeffs, family, X0, T, steps, noise, ids=ids, law=law, threads=threads,
                               record_residuals=False)
        new = traj.law()
        dist, metric = law_distance(law, new, cap)
        if trace:
            ratios.append(dist / trace[-1] if trace[-1] > 0 else 0.0)
            flat = flat + 1 if dist >= trace[-1] else 0
        trace.append(dist)
        law = new
        if dist <= tol_w:
            return PicardResult(law, traj, trace, True, metric=metric, ratios=ratios)
        if flat >= patience:
            msg = f"law iteration is not contracting: distances {trace[-patience - 1:]} did not decrease"
            warnings.warn(msg, ContractionWarning)
            return PicardResult(law, traj, trace, False, True, msg, metric, ratios)
    return PicardResult(law, traj, trace, False, metric=metric, ratios=ratios)
