"""Rate fitting, deterministic CSV output and run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__

__all__ = ["FitResult", "fit_rate", "format_value", "write_table", "sha256_file", "write_manifest", "ReportError"]


class ReportError(ValueError):
    pass


@dataclass
class FitResult:
    slope: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float
    level: float
    dof: int
    weighted: bool

    def contains(self, value):
        return self.ci_low <= value <= self.ci_high

    def as_dict(self):
        return asdict(self)


def fit_rate(N, values, stderr=None, level=0.95):
    """Weighted least-squares slope of ``log value`` against ``log N``.

    Each point is weighted by ``1 / s_i^2`` with ``s_i = stderr_i / value_i``
    (delta method for the log). The slope standard error is the larger of the
    model-based one and the one rescaled by the residual chi-square, and the
    interval uses Student t with ``n - 2`` degrees of freedom.

    Parameters
    ----------
    N, values : array_like
        At least three rows with positive entries.
    stderr : array_like, optional
        Standard errors of ``values``; omit (or pass zeros) for an unweighted fit.

    Returns
    -------
    FitResult
    """
    N = np.asarray(N, dtype=float)
    v = np.asarray(values, dtype=float)
    if N.shape != v.shape or N.ndim != 1:
        raise ReportError("N and values must be 1-d of equal length")
    if N.size < 3:
        raise ReportError("need at least three rows to fit a rate")
    if np.any(~(v > 0)) or np.any(~(N > 0)):
        raise ReportError("rate fit needs positive N and values")
    x, y = np.log(N), np.log(v)
    weighted = stderr is not None
    if weighted:
        s = np.asarray(stderr, dtype=float) / v
        weighted = bool(np.all(np.isfinite(s)) and np.all(s > 0))
    w = 1.0 / s**2 if weighted else np.ones_like(x)
    xm = np.sum(w * x) / np.sum(w)
    ym = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    if sxx <= 0:
        raise ReportError("N values must not all coincide")
    slope = np.sum(w * (x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    dof = N.size - 2
    chi2 = float(np.sum(w * (y - intercept - slope * x) ** 2))
    se_res = math.sqrt(chi2 / dof / sxx)
    se = max(math.sqrt(1.0 / sxx), se_res) if weighted else se_res
    q = stats.t.ppf(0.5 + level / 2, dof)
    return FitResult(float(slope), float(intercept), se, float(slope - q * se), float(slope + q * se),
                     level, dof, weighted)


def format_value(v):
    """Locale-free text for one CSV cell; floats round-trip through ``repr``."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_table(path, columns, rows):
    """Write rows (dicts or sequences) under a fixed header, LF endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        vals = [r[c] for c in columns] if isinstance(r, dict) else list(r)
        if len(vals) != len(columns):
            raise ReportError(f"row has {len(vals)} cells for {len(columns)} columns")
        w.writerow([format_value(x) for x in vals])
    path = Path(path)
    path.write_bytes(buf.getvalue().encode("ascii"))
    return path


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def write_manifest(path, *, kind, config_hash, seed, checks, files, extra=None):
    """JSON manifest: config hash, seed, version, checks and output digests.

    ``checks`` maps a name to ``{"passed": bool, "hard": bool, ...}``. No
    timestamps are written, so identical runs give identical manifests.
    """
    out_dir = Path(path).parent
    man = {
        "kind": kind,
        "config_sha256": config_hash,
        "seed": seed,
        "version": __version__,
        "checks": checks,
        "passed": all(c["passed"] for c in checks.values()),
        "hard_failure": any(c.get("hard", True) and not c["passed"] for c in checks.values()),
        "files": {Path(f).name: sha256_file(f) for f in files},
    }
    if extra:
        man.update(extra)
    text = json.dumps(man, indent=2, sort_keys=True, default=_jsonable, allow_nan=True) + "\n"
    out_dir.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(text.encode("utf-8"))
    return man
