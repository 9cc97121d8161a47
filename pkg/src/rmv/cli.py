"""``rmv <kind> --config FILE [--seed S] [--out DIR] [--threads K]``.

Exit status: 0 when every hard check passes, 1 on a hard check failure,
2 on a configuration error, 3 when the numerics abort.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import KINDS, ConfigError, load_config
from .paths import CadlagPath, read_csv
from .report import fit_rate, write_manifest, write_table
from .skorokhod import default_test_paths, solve, verify
from .wasserstein import w2_point_clouds

__all__ = ["main", "run"]

ENV_OUT = "RMV_OUT"
ENV_THREADS = "RMV_THREADS"


def _check(ok, hard=True, **info):
    return {**info, "passed": bool(ok), "hard": hard}


def _dims(prefix, d):
    return [f"{prefix}{j + 1}" for j in range(d)]


# ------------------------------------------------------------------ kinds


def _skorokhod_input(cfg, fam, rng):
    v = cfg.sections.get("input", {"kind": "random", "breakpoints": 50, "scale": 1.0, "value": None})
    T, d = fam.horizon, fam.dim
    if v["kind"] == "csv":
        if not v.get("file"):
            raise cfg.error("csv input needs 'file'", "input", "file")
        return read_csv(v["file"], T)
    if v["kind"] == "constant":
        val = v["value"] if v["value"] is not None else fam.anchor(0.0)
        return CadlagPath.constant(np.asarray(val, dtype=float), T)
    if v["kind"] != "random":
        raise cfg.error(f"unknown input kind {v['kind']!r}", "input", "kind")
    # random walk started at the anchor, breakpoints strictly inside (0, T)
    times = np.concatenate([[0.0], np.sort(rng.uniform(0, T, v["breakpoints"]))])
    steps = v["scale"] * rng.normal(size=(times.size, d)) / np.sqrt(max(v["breakpoints"], 1))
    steps[0] = fam.anchor(0.0)
    return CadlagPath(times, np.cumsum(steps, axis=0), T)


def run_skorokhod(cfg, out, threads):
    fam = cfg.domain_family()
    rep = fam.validate()
    rng = np.random.default_rng(cfg.seed)
    y = _skorokhod_input(cfg, fam, rng)
    sol = solve(y, fam, cfg.numerics["n"], resolve_input=True)
    tests = default_test_paths(sol, fam, n_random=cfg.numerics["n_test_paths"], seed=cfg.seed)
    ver = verify(sol, y, fam, tests)
    d = fam.dim
    t = sol.x.times
    rows = [[ti, *xi, *ki, *yi] for ti, xi, ki, yi in zip(t, sol.x.values, sol.k.values, sol.y_grid(t))]
    f = write_table(out / "solution.csv", ["t", *_dims("x", d), *_dims("k", d), *_dims("y", d)], rows)
    checks = {
        "domain_valid": _check(rep.ok, failures=rep.failures),
        "verification": _check(ver.passed, **ver.as_dict()),
    }
    extra = {"k_variation": sol.k_variation, "variation_constant": sol.variation_constant,
             "anchor_margin": rep.anchor_margin, "grid_size": int(t.size)}
    return [f], checks, extra


def _system(cfg):
    fam = cfg.domain_family()
    return fam, cfg.coefficients(fam.dim), cfg.noise(fam.dim), cfg.initial(fam.dim)


def run_simulate(cfg, out, threads):
    from .mckean_vlasov import simulate_system

    fam, co, noise, init = _system(cfg)
    num = cfg.numerics
    ids = np.arange(num["N"], dtype=np.int64)
    X0 = init.sample(cfg.seed, ids, fam)
    tr = simulate_system(co, fam, X0, num["T"], num["steps"], noise, ids=ids, refine=num["refine"],
                         threads=threads, n_test=num["n_test_paths"])
    d = fam.dim
    rows = [[t, int(ids[i]), *tr.X[i, g], *tr.K[i, g]] for i in range(tr.N) for g, t in enumerate(tr.grid)]
    f1 = write_table(out / "paths.csv", ["t", "particle", *_dims("x", d), *_dims("k", d)], rows)
    mean = [[t, *tr.law().at(t).mean(), float(np.mean(tr.Kvar[:, g]))] for g, t in enumerate(tr.grid)]
    f2 = write_table(out / "summary.csv", ["t", *_dims("mean_x", d), "mean_k_variation"], mean)
    checks = {"residuals": _check(tr.residuals["passed"], **tr.residuals)}
    return [f1, f2], checks, {"n_jumps": int(tr.n_jumps), "grid_size": int(tr.grid.size), "digest": tr.digest()}


def run_picard(cfg, out, threads):
    from .mckean_vlasov import picard_solve

    fam, co, noise, init = _system(cfg)
    num = cfg.numerics
    M = num["M"] or num["N"]
    ids = np.arange(M, dtype=np.int64)
    X0 = init.sample(cfg.seed, ids, fam)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = picard_solve(co, fam, X0, num["T"], num["steps"], noise, ids=ids, max_iters=num["max_iters"],
                           tol_w=num["tol_w"], threads=threads)
    ratios = [float("nan")] + list(res.ratios)
    f1 = write_table(out / "trace.csv", ["iteration", "w_distance", "ratio"],
                     [[i + 1, w, r] for i, (w, r) in enumerate(zip(res.trace, ratios))])
    grid = res.law.grid
    f2 = write_table(out / "law_mean.csv", ["t", *_dims("mean_x", fam.dim)],
                     [[t, *res.law.at(t).mean()] for t in grid])
    checks = {"converged": _check(res.converged, iterations=res.iterations, diagnostic=res.diagnostic,
                                  metric=res.metric)}
    return [f1, f2], checks, {"trace": res.trace}


def decreasing_beyond_stderr(rows):
    """``err_j - err_{j+1} > sqrt(se_j^2 + se_{j+1}^2)`` for consecutive rows."""
    return all(a["error"] - b["error"] > np.hypot(a["stderr"], b["stderr"]) for a, b in zip(rows, rows[1:]))


def run_chaos(cfg, out, threads):
    from .mckean_vlasov import coupled_chaos_run

    fam, co, noise, init = _system(cfg)
    num = cfg.numerics
    N_list = num["N_list"] or [8, 32, 128, 512]
    res = coupled_chaos_run(co, fam, noise, init, N_list, num["T"], num["steps"], num["reps"], M=num["M"],
                            threads=threads, w_times=num["w_times"], picard_iters=num["max_iters"],
                            picard_tol=num["tol_w"], m_sensitivity_reps=num["m_sensitivity_reps"])
    cols = ["N", "error", "stderr", "w2_coupled", "w2_independent", "reps"]
    files = [write_table(out / "chaos.csv", cols, res.rows)]
    files.append(write_table(out / "chaos_reps.csv", ["N", "rep", "error"],
                             [[N, r, e] for N, errs in res.per_rep.items() for r, e in enumerate(errs)]))
    files.append(write_table(out / "picard_trace.csv", ["iteration", "w_distance"],
                             [[i + 1, w] for i, w in enumerate(res.picard.trace)]))
    if res.m_sensitivity:
        files.append(write_table(out / "m_sensitivity.csv", ["N", "error_M", "error_M_half"], res.m_sensitivity))
    band = num["slope_band"] or [-0.7, -0.3]
    checks = {
        "residuals": _check(res.residuals_ok),
        "picard_converged": _check(res.picard.converged, iterations=res.picard.iterations),
        "decreasing_beyond_stderr": _check(decreasing_beyond_stderr(res.rows), hard=False),
    }
    extra = {"M": res.M}
    if len(res.rows) >= 3 and all(r["error"] > 0 for r in res.rows):
        fit = fit_rate([r["N"] for r in res.rows], [r["error"] for r in res.rows],
                       [r["stderr"] for r in res.rows])
        files.append(write_table(out / "chaos_fit.csv", ["slope", "stderr", "ci_low", "ci_high", "intercept"],
                                 [[fit.slope, fit.stderr, fit.ci_low, fit.ci_high, fit.intercept]]))
        checks["slope_in_band"] = _check(band[0] <= fit.slope <= band[1], hard=False, slope=fit.slope, band=band)
        extra["fit"] = fit.as_dict()
    return files, checks, extra


def run_stability(cfg, out, threads):
    from .mckean_vlasov import stability_run

    fam, co, noise, init = _system(cfg)
    num = cfg.numerics
    res = stability_run(co, fam, noise, init, num["n_list"] or [1, 2, 4, 8, 16, 32], num["N_mc"], num["T"],
                        num["steps"], perturb=num["perturb"], xi_scale=num["xi_scale"], threads=threads)
    f1 = write_table(out / "stability.csv", ["n", "error", "stderr"], res.rows)
    f2 = write_table(out / "floor.csv", ["floor", "stderr"], [[res.floor, res.floor_stderr]])
    checks = {"decreasing_below_floor": _check(res.passed, hard=False, floor=res.floor)}
    return [f1, f2], checks, {}


def _cloud(path):
    return np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2))


def run_wasserstein(cfg, out, threads):
    v = cfg.sections.get("clouds", {"kind": "random", "k": 64, "d": 2, "method": "auto"})
    if v["kind"] == "csv":
        if not (v.get("file_a") and v.get("file_b")):
            raise cfg.error("csv clouds need file_a and file_b", "clouds", "file_a")
        A, B = _cloud(v["file_a"]), _cloud(v["file_b"])
    elif v["kind"] == "random":
        rng = np.random.default_rng(cfg.seed)
        A, B = rng.normal(size=(2, v["k"], v["d"]))
    else:
        raise cfg.error(f"unknown clouds kind {v['kind']!r}", "clouds", "kind")
    res = w2_point_clouds(A, B, method=v["method"])
    f1 = write_table(out / "wasserstein.csv", ["k", "d", "method", "certified", "distance"],
                     [[A.shape[0], A.shape[1], res.method, res.certified, res.distance]])
    files = [f1]
    if res.plan.ndim == 1:
        files.append(write_table(out / "plan.csv", ["source", "target"], list(enumerate(res.plan))))
    return files, {"finite": _check(np.isfinite(res.distance))}, {"distance": res.distance}


RUNNERS = {"skorokhod": run_skorokhod, "simulate": run_simulate, "picard": run_picard, "chaos": run_chaos,
           "stability": run_stability, "wasserstein": run_wasserstein}


def run(cfg, out=None, threads=1):
    """Execute a validated config; returns the manifest dict."""
    out = Path(out) if out is not None else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    files, checks, extra = RUNNERS[cfg.kind](cfg, out, threads)
    return write_manifest(out / "manifest.json", kind=cfg.kind, config_hash=cfg.config_hash(), seed=cfg.seed,
                          checks=checks, files=files, extra=extra)


def _parser():
    p = argparse.ArgumentParser(prog="rmv", description="Reflected McKean-Vlasov experiments.")
    sub = p.add_subparsers(dest="kind", required=True)
    for k in KINDS:
        s = sub.add_parser(k, help=f"run a {k} experiment")
        s.add_argument("--config", required=True, help="INI experiment file")
        s.add_argument("--seed", type=int, help="override [experiment] seed")
        s.add_argument("--out", help=f"output directory (env {ENV_OUT})")
        s.add_argument("--threads", type=int, help=f"worker threads, never changes results (env {ENV_THREADS})")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, kind=args.kind, seed=args.seed)
        threads = args.threads or int(os.environ.get(ENV_THREADS, "0") or 0) or 1
        if threads < 1:
            raise ConfigError("--threads must be positive")
        out = args.out or os.environ.get(ENV_OUT) or cfg.out_dir
        man = run(cfg, out, threads)
    except ConfigError as exc:
        print(f"rmv: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"rmv: {args.kind} failed: {exc}", file=sys.stderr)
        return 3
    for name, c in man["checks"].items():
        tag = "PASS" if c["passed"] else ("FAIL" if c["hard"] else "WARN")
        print(f"{tag} {name}")
    print(f"wrote {len(man['files'])} files to {out}")
    return 1 if man["hard_failure"] else 0


if __name__ == "__main__":
    sys.exit(main())
