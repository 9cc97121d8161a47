"""Experiment configuration: flat INI sections with a typed schema.

Schema (``*`` marks required keys)::

    [experiment]    kind*, seed*
    [domain] or [domain.<j>]
                    type* = box | ball | polytope, start (default 0),
                    lo, hi (box); center, radius (ball);
                    normals, offsets or vertices (polytope)
    [anchor]        times, values               (optional interior path)
    [coefficients]  name* plus numeric parameters of the builtin family
    [noise]         brownian_dim, intensity, marks, marks.<param>
    [initial]       kind = point | gaussian | uniform_box, x0, mean, scale, lo, hi
    [input]         kind = random | constant | csv, breakpoints, scale, file, value
    [clouds]        kind = random | csv, k, d, file_a, file_b, method (wasserstein)
    [numerics]      T, steps, n, N, N_list, M, reps, tol_w, max_iters, refine,
                    n_list, N_mc, perturb, xi_scale, w_times, m_sensitivity_reps,
                    n_test_paths, slope_band
    [output]        dir

Vectors are comma separated; matrix rows are separated by ``;``.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domains import DomainFamily
from .drivers import NoiseConfig, make_marks
from .geometry import Ball, Box, Polytope
from .mckean_vlasov import InitialLaw, make_coefficients
from .paths import CadlagPath

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "KINDS"]

KINDS = ("skorokhod", "simulate", "picard", "chaos", "stability", "wasserstein")
REQUIRED = object()


class ConfigError(ValueError):
    """Schema violation; carries the offending line and field when known."""

    def __init__(self, message, line=None, field=None, source="<config>"):
        self.line, self.field, self.source = line, field, source
        where = source if line is None else f"{source}:{line}"
        what = f" [{field}]" if field else ""
        super().__init__(f"{where}:{what} {message}")


def _vec(s):
    return [float(x) for x in s.split(",") if x.strip()]


def _mat(s):
    return [_vec(r) for r in s.split(";") if r.strip()]


def _ints(s):
    return [int(x) for x in s.split(",") if x.strip()]


def _bool(s):
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


_TYPE_NAMES = {int: "integer", float: "number", str: "string", _vec: "vector", _mat: "matrix",
               _ints: "integer list", _bool: "boolean"}

SCHEMA = {
    "experiment": {"kind": (str, REQUIRED), "seed": (int, REQUIRED)},
    "domain": {"type": (str, REQUIRED), "start": (float, 0.0), "lo": (_vec, None), "hi": (_vec, None),
               "center": (_vec, None), "radius": (float, None), "normals": (_mat, None),
               "offsets": (_vec, None), "vertices": (_mat, None)},
    "anchor": {"times": (_vec, REQUIRED), "values": (_mat, REQUIRED)},
    "coefficients": {"name": (str, REQUIRED)},
    "noise": {"brownian_dim": (int, None), "intensity": (float, 0.0), "marks": (str, None)},
    "initial": {"kind": (str, "point"), "x0": (_vec, None), "mean": (_vec, None), "scale": (float, None),
                "lo": (_vec, None), "hi": (_vec, None)},
    "input": {"kind": (str, "random"), "breakpoints": (int, 50), "scale": (float, 1.0), "file": (str, None),
              "value": (_vec, None)},
    "clouds": {"kind": (str, "random"), "k": (int, 64), "d": (int, 2), "file_a": (str, None),
               "file_b": (str, None), "method": (str, "auto")},
    "numerics": {"T": (float, 1.0), "steps": (int, 100), "n": (int, 64), "N": (int, 64), "N_list": (_ints, None),
                 "M": (int, None), "reps": (int, 8), "tol_w": (float, 1e-12), "max_iters": (int, 50),
                 "refine": (int, 1), "n_list": (_ints, None), "N_mc": (int, 256), "perturb": (float, 1.0),
                 "xi_scale": (float, 1.0), "w_times": (_vec, None), "m_sensitivity_reps": (int, 0),
                 "n_test_paths": (int, 32), "slope_band": (_vec, None)},
    "output": {"dir": (str, "rmv_out")},
}
# coefficient parameters: integers for dimensions, numbers otherwise
_COEFF_INT = {"d", "m"}
# sections that do not change results
_NON_SEMANTIC = {"output"}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    sections: dict
    source: str = "<config>"
    lines: dict = field(default_factory=dict)

    def get(self, section, key):
        return self.sections.get(section, {}).get(key)

    @property
    def numerics(self):
        return self.sections["numerics"]

    @property
    def out_dir(self):
        return Path(self.sections["output"]["dir"])

    def canonical(self):
        """Normalized semantic content; parsed values, sorted keys."""
        return {s: v for s, v in sorted(self.sections.items()) if s not in _NON_SEMANTIC}

    def config_hash(self):
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def error(self, message, section, key=None):
        return ConfigError(message, self.lines.get((section, key)) or self.lines.get((section, None)),
                           f"{section}.{key}" if key else section, self.source)

    # ------------------------------------------------------------ builders

    def domain_family(self):
        T = self.numerics["T"]
        secs = sorted((s for s in self.sections if s == "domain" or s.startswith("domain.")),
                      key=lambda s: self.sections[s]["start"])
        if not secs:
            raise ConfigError("no [domain] section", source=self.source)
        pieces, starts = [], []
        for s in secs:
            v = self.sections[s]
            try:
                pieces.append(_build_set(v))
            except (ValueError, TypeError, KeyError) as exc:
                raise self.error(str(exc), s, "type") from None
            starts.append(v["start"])
        anchor = None
        if "anchor" in self.sections:
            a = self.sections["anchor"]
            try:
                anchor = CadlagPath(a["times"], np.array(a["values"]), T)
            except ValueError as exc:
                raise self.error(str(exc), "anchor", "values") from None
        try:
            return DomainFamily(T, starts, pieces, anchor)
        except ValueError as exc:
            raise self.error(str(exc), secs[0], "start") from None

    def coefficients(self, d=None):
        p = dict(self.sections["coefficients"])
        name = p.pop("name")
        if d is not None:
            p.setdefault("d", d)
        try:
            return make_coefficients(name, **p)
        except (TypeError, ValueError) as exc:
            raise self.error(str(exc), "coefficients", "name") from None

    def noise(self, d):
        n = self.sections.get("noise", {})
        marks = None
        if n.get("marks"):
            params = {k.split(".", 1)[1]: v for k, v in n.items() if k.startswith("marks.")}
            try:
                marks = make_marks(n["marks"], **params)
            except (TypeError, ValueError) as exc:
                raise self.error(str(exc), "noise", "marks") from None
        bd = n.get("brownian_dim")
        try:
            return NoiseConfig(d if bd is None else bd, n.get("intensity", 0.0), marks, seed=self.seed)
        except ValueError as exc:
            raise self.error(str(exc), "noise", "intensity") from None

    def initial(self, d):
        v = self.sections.get("initial", {"kind": "point"})
        params = {k: val for k, val in v.items() if k != "kind" and val is not None}
        if v["kind"] not in ("point", "gaussian", "uniform_box"):
            raise self.error(f"unknown initial law {v['kind']!r}", "initial", "kind")
        if v["kind"] == "uniform_box" and ("lo" not in params or "hi" not in params):
            raise self.error("uniform_box needs lo and hi", "initial", "kind")
        return InitialLaw(v["kind"], params)


def _build_set(v):
    t = v["type"]
    if t == "box":
        return Box(v["lo"], v["hi"])
    if t == "ball":
        return Ball(v["center"], v["radius"])
    if t == "polytope":
        if v.get("vertices") is not None:
            return Polytope.from_vertices(np.array(v["vertices"]))
        return Polytope(np.array(v["normals"]), v["offsets"])
    raise ValueError(f"unknown domain type {t!r} (box, ball, polytope)")


def _line_index(text):
    """``(section, key) -> line number`` for diagnostics (configparser drops them)."""
    out, sec = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", s)
        if m:
            sec = m.group(1).strip()
            out.setdefault((sec, None), i)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", s)
        if m and sec is not None:
            out.setdefault((sec, m.group(1).strip()), i)
    return out


def _schema_for(section):
    base = section.split(".", 1)[0]
    if base == "domain":
        return SCHEMA["domain"]
    return SCHEMA.get(section)


def parse_config(text, source="<config>", kind=None, seed=None):
    """Parse and validate config text; ``kind``/``seed`` override the file."""
    lines = _line_index(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        ln = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], ln, None, source) from None

    def err(msg, sec, key=None):
        return ConfigError(msg, lines.get((sec, key)) or lines.get((sec, None)),
                           f"{sec}.{key}" if key else sec, source)

    sections = {}
    for sec in cp.sections():
        schema = _schema_for(sec)
        if schema is None:
            raise err(f"unknown section [{sec}]", sec)
        vals = {}
        for key, raw in cp.items(sec):
            if sec == "coefficients" and key != "name":
                conv = int if key in _COEFF_INT else float
            elif sec == "noise" and key.startswith("marks."):
                conv = _vec if "," in raw or key.split(".", 1)[1] in ("values", "probs", "center") else float
            elif key in schema:
                conv = schema[key][0]
            else:
                raise err(f"unknown field {key!r}", sec, key)
            try:
                vals[key] = conv(raw)
            except ValueError:
                raise err(f"expected {_TYPE_NAMES.get(conv, 'value')}, got {raw!r}", sec, key) from None
        for key, (_, default) in schema.items():
            if key not in vals:
                if default is REQUIRED and sec not in ("experiment",):
                    raise err(f"missing required field {key!r}", sec, key)
                if default is not REQUIRED:
                    vals[key] = default
        sections[sec] = vals

    exp = sections.setdefault("experiment", {})
    if kind is not None:
        if exp.get("kind") not in (None, kind):
            raise err(f"config is for {exp['kind']!r}, not {kind!r}", "experiment", "kind")
        exp["kind"] = kind
    if exp.get("kind") is None:
        raise err("missing required field 'kind'", "experiment", "kind")
    if exp["kind"] not in KINDS:
        raise err(f"unknown kind {exp['kind']!r}; choose from {', '.join(KINDS)}", "experiment", "kind")
    if seed is not None:
        exp["seed"] = int(seed)
    if exp.get("seed") is None:
        raise err("missing required field 'seed' (no wall-clock seeding)", "experiment", "seed")
    for sec in ("numerics", "output"):
        sections.setdefault(sec, {k: d for k, (_, d) in SCHEMA[sec].items()})
    num = sections["numerics"]
    for key in ("steps", "n", "N", "reps", "N_mc", "refine", "max_iters"):
        if num[key] < 1:
            raise err(f"{key} must be positive", "numerics", key)
    if not num["T"] > 0:
        raise err("T must be positive", "numerics", "T")
    if exp["kind"] != "wasserstein":
        for need in ("coefficients",) if exp["kind"] not in ("skorokhod",) else ():
            if need not in sections:
                raise err(f"kind {exp['kind']!r} needs a [{need}] section", "experiment", "kind")
        if not any(s == "domain" or s.startswith("domain.") for s in sections):
            raise err(f"kind {exp['kind']!r} needs a [domain] section", "experiment", "kind")
    cfg = ExperimentConfig(exp["kind"], exp["seed"], sections, source, lines)
    if exp["kind"] != "wasserstein":
        fam = cfg.domain_family()
        if "coefficients" in sections:
            co = cfg.coefficients(fam.dim)
            if getattr(co, "d", fam.dim) != fam.dim:
                raise cfg.error(f"coefficients have d={co.d} but the domain has d={fam.dim}", "coefficients", "d")
    return cfg


def load_config(path, kind=None, seed=None):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from None
    return parse_config(text, str(path), kind, seed)
