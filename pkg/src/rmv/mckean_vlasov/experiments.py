"""Coupling, stability and Lipschitz-probe experiments built on the particle engine."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..drivers import NoiseConfig, compensator
from ..wasserstein import w2_point_clouds
from .coefficients import EmpiricalMeasure
from .engine import InitialLaw, simulate_system
from .picard import picard_solve

__all__ = [
    "ChaosResult",
    "StabilityResult",
    "ProbeResult",
    "LipschitzWarning",
    "coupled_chaos_run",
    "stability_run",
    "lipschitz_probe",
    "sup_sq_error",
    "STREAM_STRIDE",
]

# stream ids of distinct particle blocks are separated by this stride
STREAM_STRIDE = 1_000_000


class LipschitzWarning(RuntimeWarning):
    pass


def sup_sq_error(A, B):
    """Per-particle ``sup_t |A_i - B_i|^2`` for arrays ``(N, G, d)`` on one grid."""
    return np.max(np.sum((A - B) ** 2, axis=-1), axis=1)


def _stats(x):
    x = np.asarray(x, dtype=float)
    se = float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("nan")
    return float(x.mean()), se


@dataclass
class ChaosResult:
    rows: list
    per_rep: dict
    picard: object
    M: int
    w_times: list
    residuals_ok: bool = True
    m_sensitivity: list = field(default_factory=list)


def coupled_chaos_run(coeffs, family, noise, initial, N_list, T, steps, reps, M=None, threads=1,
                      w_times=None, picard_iters=50, picard_tol=1e-12, m_sensitivity_reps=0):
    """Synchronous coupling between the interacting system and its mean-field limit.

    The limit law is approximated once by :func:`picard_solve` with ``M``
    reference paths (default ``4 * max(N_list)``) on stream block 0. For each
    ``N`` and repetition the system and ``N`` limit particles are driven by the
    same initial states and stream ids; limit particles see the frozen law.

    Returns
    -------
    ChaosResult
        ``rows`` holds, per ``N``: mean of ``mean_i sup_t |X^{i,N} - X^i|^2``
        over repetitions with its standard error, plus mean squared W2 between
        the empirical measure of the system and (a) the coupled limit
        particles, (b) ``N`` independent reference particles, at ``w_times``.
    """
    N_list = [int(n) for n in N_list]
    if N_list != sorted(N_list):
        raise ValueError("N_list must be ascending")
    noise = noise if noise is not None else NoiseConfig(0)
    M = int(M) if M is not None else 4 * max(N_list)
    if M < max(N_list):
        raise ValueError("need M >= max(N_list) reference paths")
    w_times = [T * f for f in (0.25, 0.5, 0.75, 1.0)] if w_times is None else list(w_times)
    ref_ids = np.arange(M, dtype=np.int64)
    X0_ref = initial.sample(noise.seed, ref_ids, family)
    pic = picard_solve(coeffs, family, X0_ref, T, steps, noise, ids=ref_ids, max_iters=picard_iters,
                       tol_w=picard_tol, threads=threads)
    law = pic.law
    half = None
    if m_sensitivity_reps:
        half = picard_solve(coeffs, family, X0_ref[: M // 2], T, steps, noise, ids=ref_ids[: M // 2],
                            max_iters=picard_iters, tol_w=picard_tol, threads=threads).law
    rows, per_rep, sens = [], {}, []
    ok = True
    for j, N in enumerate(N_list):
        errs, wc, wi, eh = [], [], [], []
        for r in range(reps):
            ids = STREAM_STRIDE * (1 + r * len(N_list) + j) + np.arange(N, dtype=np.int64)
            X0 = initial.sample(noise.seed, ids, family)
            sys_ = simulate_system(coeffs, family, X0, T, steps, noise, ids=ids, threads=threads)
            lim = simulate_system(coeffs, family, X0, T, steps, noise, ids=ids, law=law, threads=threads,
                                  record_residuals=False)
            ok &= sys_.residuals["passed"]
            errs.append(float(np.mean(sup_sq_error(sys_.X, lim.X))))
            wc.append(np.mean([w2_point_clouds(sys_.at(s), lim.at(s)).distance ** 2 for s in w_times]))
            wi.append(np.mean([w2_point_clouds(sys_.at(s), law.at(s).points[:N]).distance ** 2 for s in w_times]))
            if half is not None and r < m_sensitivity_reps:
                lim_h = simulate_system(coeffs, family, X0, T, steps, noise, ids=ids, law=half, threads=threads,
                                        record_residuals=False)
                eh.append(float(np.mean(sup_sq_error(sys_.X, lim_h.X))))
        mean, se = _stats(errs)
        rows.append({
            "N": N,
            "error": mean,
            "stderr": se,
            "w2_coupled": float(np.mean(wc)),
            "w2_independent": float(np.mean(wi)),
            "reps": reps,
        })
        per_rep[N] = errs
        if eh:
            sens.append({"N": N, "error_M": float(np.mean(errs[: len(eh)])), "error_M_half": float(np.mean(eh))})
    return ChaosResult(rows, per_rep, pic, M, w_times, ok, sens)


@dataclass
class StabilityResult:
    rows: list
    floor: float
    floor_stderr: float
    passed: bool


def _coarse_columns(fine_grid, coarse_grid):
    idx = np.searchsorted(fine_grid, coarse_grid)
    if not np.array_equal(fine_grid[idx], coarse_grid):
        raise RuntimeError("refined grid does not contain the coarse grid")
    return idx


def stability_run(coeffs, family, noise, initial, n_list, N_mc, T, steps, perturb=1.0, xi_scale=1.0,
                  threads=1, stream_block=0):
    """Error of the perturbed systems against the unperturbed one, frozen seeds.

    System ``n`` uses drift ``b + (perturb / n) * sin-kernel`` and initial
    states ``P_{D_0}(X_0 + xi_scale * xi / n)``. The discretization floor is
    ``E sup |X^dt - X^{dt/2}|^2`` from a control run with midpoints inserted.
    Passes when the errors do not increase with ``n`` and the last one is
    below ten times the floor.
    """
    noise = noise if noise is not None else NoiseConfig(0)
    ids = STREAM_STRIDE * stream_block + np.arange(N_mc, dtype=np.int64)
    X0 = initial.sample(noise.seed, ids, family)
    xi = InitialLaw.perturbation(noise.seed, ids, family.dim)
    base = simulate_system(coeffs, family, X0, T, steps, noise, ids=ids, threads=threads, record_residuals=False)
    rows = []
    for n in n_list:
        cn = coeffs.perturbed(perturb / n) if perturb else coeffs
        X0n = family.at(0.0).project(X0 + xi_scale * xi / n)
        tr = simulate_system(cn, family, X0n, T, steps, noise, ids=ids, threads=threads, record_residuals=False)
        mean, se = _stats(sup_sq_error(tr.X, base.X))
        rows.append({"n": int(n), "error": mean, "stderr": se})
    fine = simulate_system(coeffs, family, X0, T, steps, noise, ids=ids, refine=2, threads=threads,
                           record_residuals=False)
    cols = _coarse_columns(fine.grid, base.grid)
    floor, floor_se = _stats(sup_sq_error(fine.X[:, cols], base.X))
    errs = [r["error"] for r in rows]
    passed = all(b <= a for a, b in zip(errs, errs[1:])) and errs[-1] < 10 * floor
    return StabilityResult(rows, floor, floor_se, bool(passed))


@dataclass
class ProbeResult:
    gamma_hat: float
    delta_hat: float
    jump_growth_hat: float
    gamma_declared: float
    exceeded: bool


def lipschitz_probe(coeffs, d, n_samples=2000, k=8, scale=1.0, seed=0, intensity=0.0, marks=None, t=0.0):
    """Sampled difference quotients of ``b`` and ``sigma`` in ``(x, mu)``.

    ``gamma_hat = max |f(x, mu) - f(x', mu')| / (|x - x'| + W2(mu, mu'))``
    over random pairs (a third share ``mu``, a third share ``x``), ``delta_hat``
    the largest ``|f(x, mu)| / (1 + |x|)`` and ``jump_growth_hat`` the largest
    ``intensity * E|beta|^2 / (1 + |x|^2)``. Advisory: warns when
    ``gamma_hat`` exceeds the declared constant.
    """
    rng = np.random.default_rng(seed)
    gam = delta = jg = 0.0

    def sig(x, mu):
        S = coeffs.diffusion(t, x[None], mu)
        return S if S.ndim == 2 else S[0]

    for i in range(n_samples):
        x, x2 = rng.normal(scale=scale, size=(2, d))
        P = rng.normal(scale=scale, size=(k, d))
        P2 = rng.normal(scale=scale, size=(k, d))
        mode = i % 3
        if mode == 0:
            P2 = P
        elif mode == 1:
            x2 = x
        mu, mu2 = EmpiricalMeasure(P), EmpiricalMeasure(P2)
        den = np.linalg.norm(x - x2) + (w2_point_clouds(P, P2).distance if mode != 0 else 0.0)
        fb = coeffs.drift(t, x[None], mu)[0]
        if den > 0:
            nb = np.linalg.norm(fb - coeffs.drift(t, x2[None], mu2)[0])
            ns = np.linalg.norm(sig(x, mu) - sig(x2, mu2))
            gam = max(gam, nb / den, ns / den)
        delta = max(delta, np.linalg.norm(fb) / (1 + np.linalg.norm(x)), np.linalg.norm(sig(x, mu)) / (1 + np.linalg.norm(x)))
        if intensity > 0 and i < 200:
            jg = max(jg, _jump_sq(coeffs, t, x, mu, intensity, marks) / (1 + x @ x))
    exceeded = gam > coeffs.gamma * (1 + 1e-9)
    if exceeded:
        warnings.warn(f"sampled Lipschitz ratio {gam:.4g} exceeds declared constant {coeffs.gamma:.4g}", LipschitzWarning)
    return ProbeResult(float(gam), float(delta), float(jg), float(coeffs.gamma), bool(exceeded))


def _jump_sq(coeffs, t, x, mu, intensity, marks):
    val, _ = compensator(lambda z: np.sum(coeffs.jump(t, x[None], mu, z) ** 2, axis=-1, keepdims=True),
                         intensity, marks)
    return float(np.ravel(val)[0])
