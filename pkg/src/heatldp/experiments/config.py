"""Experiment configuration files.

A configuration is an INI file with four sections::

    [experiment]
    name = hj_sweep          ; one of EXPERIMENTS
    seed = 0

    [space]
    kind = circle            ; interval | circle | graph
    n = 256
    circumference = 2pi
    stencil = spectral       ; fd | spectral (circle only)

    [params]
    t = 1
    eps = 0.4, 0.2, 0.1, 0.05, 0.025
    phi = sin

    [output]
    dir = results
    format = csv             ; csv | json

Value grammar: numbers accept a trailing ``pi`` (``2pi``, ``0.5pi``, ``pi``);
lists are comma separated or written ``geomspace(a, b, k)`` /
``linspace(a, b, k)``; set ranges are ``lo:hi``; graph edges are
``i-j:length`` items; booleans are ``true``/``false``.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass

import numpy as np

EXPERIMENTS = (
    "kernel_validate",
    "hj_sweep",
    "contraction",
    "varadhan",
    "set_ldp",
    "varadhan_lemma",
    "gamma_dirac",
    "tube_ldp",
    "schrodinger_sweep",
)
PHI_CATALOGUE = ("sin", "coordinate", "well", "custom-table")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


def parse_float(text: str, name: str) -> float:
    s = str(text).strip().lower().replace(" ", "")
    try:
        if s.endswith("pi"):
            coef = s[:-2].rstrip("*")
            return (float(coef) if coef else 1.0) * math.pi
        return float(s)
    except ValueError:
        raise ConfigError(name, f"cannot read {text!r} as a number") from None


_SPACED = re.compile(r"^(geomspace|linspace)\((.*)\)$")


def parse_floats(text: str, name: str) -> list:
    s = str(text).strip()
    m = _SPACED.match(s.replace(" ", ""))
    if m:
        parts = m.group(2).split(",")
        if len(parts) != 3:
            raise ConfigError(name, f"{m.group(1)} takes (start, stop, count)")
        a, b = parse_float(parts[0], name), parse_float(parts[1], name)
        k = parse_int(parts[2], name)
        if k < 1:
            raise ConfigError(name, "count must be positive")
        if m.group(1) == "geomspace":
            if not (a > 0 and b > 0):
                raise ConfigError(name, "geomspace bounds must be positive")
            return [float(v) for v in np.geomspace(a, b, k)]
        return [float(v) for v in np.linspace(a, b, k)]
    items = [p for p in s.split(",") if p.strip()]
    if not items:
        raise ConfigError(name, "empty list")
    return [parse_float(p, name) for p in items]


def parse_int(text: str, name: str) -> int:
    try:
        return int(str(text).strip())
    except ValueError:
        raise ConfigError(name, f"cannot read {text!r} as an integer") from None


def parse_bool(text: str, name: str) -> bool:
    s = str(text).strip().lower()
    if s in ("true", "yes", "1", "on"):
        return True
    if s in ("false", "no", "0", "off"):
        return False
    raise ConfigError(name, f"cannot read {text!r} as a boolean")


def parse_ranges(text: str, name: str) -> list:
    out = []
    for item in str(text).split(","):
        if not item.strip():
            continue
        if ":" not in item:
            raise ConfigError(name, f"range {item.strip()!r} must be written lo:hi")
        lo, hi = item.split(":", 1)
        lo, hi = parse_float(lo, name), parse_float(hi, name)
        if lo > hi:
            raise ConfigError(name, f"range {item.strip()!r} has lo > hi")
        out.append((lo, hi))
    if not out:
        raise ConfigError(name, "no ranges given")
    return out


def parse_edges(text: str, name: str) -> list:
    edges = []
    for item in str(text).split(","):
        item = item.strip()
        if not item:
            continue
        m = re.fullmatch(r"(\d+)\s*-\s*(\d+)\s*:\s*(\S+)", item)
        if not m:
            raise ConfigError(name, f"edge {item!r} must be written i-j:length")
        edges.append((int(m.group(1)), int(m.group(2)), parse_float(m.group(3), name)))
    if not edges:
        raise ConfigError(name, "no edges given")
    return edges


# Per-experiment parameter grammar: key -> (kind, default); default None means required.
PARAMS = {
    "kernel_validate": {
        "t": ("floats", None),
        "s": ("float", 0.1),
        "mass_tol": ("float", 1e-10),
        "sym_tol": ("float", 1e-10),
        "ck_tol": ("float", 1e-8),
        "oracle_rtol": ("float", 1e-6),
        "export_kernel": ("bool", True),
    },
    "hj_sweep": {
        "t": ("float", 1.0),
        "eps": ("floats", None),
        "phi": ("str", "sin"),
        "floor_factor": ("float", 2.0),
        "osc_fraction": ("float", 0.02),
        "abs_tol": ("float", 1e-12),
    },
    "contraction": {
        "t": ("floats", None),
        "eps": ("floats", None),
        "phi": ("str", "sin"),
        "rtol": ("float", 1e-6),
        "mesh_coef": ("float", 0.0),
    },
    "varadhan": {
        "x": ("float", None),
        "y": ("float", None),
        "t": ("floats", None),
        "rtol": ("float", 0.05),
    },
    "set_ldp": {
        "x": ("float", None),
        "sets": ("ranges", None),
        "set_kind": ("str", "open"),
        "t": ("floats", None),
        "rtol": ("float", 0.10),
        "atol": ("float", 0.005),
    },
    "varadhan_lemma": {
        "x": ("float", None),
        "phi": ("str", "sin"),
        "t": ("floats", None),
        "rtol": ("float", 0.05),
        "atol": ("float", 1e-12),
    },
    "gamma_dirac": {
        "x": ("float", None),
        "z": ("float", None),
        "t": ("floats", None),
        "rtol": ("float", 0.10),
        "entropy_tol": ("float", 1e-12),
    },
    "tube_ldp": {
        "x": ("float", None),
        "path": ("floats", None),
        "r_mesh": ("float", 4.0),
        "t": ("floats", None),
        "slack": ("float", 0.15),
        "n_samples": ("int", 0),
    },
    "schrodinger_sweep": {
        "eps": ("floats", None),
        "mu0": ("str", "bump"),
        "mu1": ("str", "bump"),
        "mu0_center": ("float", 0.25),
        "mu1_center": ("float", 0.75),
        "width": ("float", 0.2),
        "floor": ("float", 1e-3),
        "tol": ("float", 1e-10),
        "max_iter": ("int", 100_000),
        "gap_rtol": ("float", 0.10),
        "defect_tol": ("float", 1e-9),
        "w2_tol": ("float", 1e-9),
    },
}
# Optional keys accepted by every experiment that uses a phi selector or tables.
_EXTRA = {
    "phi_table": ("floats", None),
    "phi_scale": ("float", 1.0),
    "phi_center": ("float", None),
    "mu0_table": ("floats", None),
    "mu1_table": ("floats", None),
}

SPACE_KEYS = {
    "interval": {"n", "length", "k_lower", "stencil"},
    "circle": {"n", "circumference", "k_lower", "stencil"},
    "graph": {"edges", "weights", "k_lower", "stencil"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    space: dict
    params: dict
    seed: int = 0
    out_dir: str = "results"
    format: str = "csv"
    stencil: str = "fd"

    def echo(self) -> dict:
        """Plain-data copy used in result bundles."""
        space = {k: ([list(e) for e in v] if k == "edges" else v) for k, v in self.space.items()}
        params = {k: ([list(r) for r in v] if k == "sets" else v) for k, v in self.params.items()}
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "space": dict(sorted(space.items())),
            "stencil": self.stencil,
            "params": dict(sorted(params.items())),
        }


def _parse_value(kind: str, text: str, name: str):
    if kind == "float":
        return parse_float(text, name)
    if kind == "floats":
        return parse_floats(text, name)
    if kind == "int":
        return parse_int(text, name)
    if kind == "bool":
        return parse_bool(text, name)
    if kind == "ranges":
        return parse_ranges(text, name)
    return str(text).strip()


def _parse_space(section) -> tuple[dict, str]:
    if "kind" not in section:
        raise ConfigError("space.kind", "missing")
    kind = section["kind"].strip()
    if kind not in SPACE_KEYS:
        raise ConfigError("space.kind", f"unknown kind {kind!r}")
    unknown = set(section) - SPACE_KEYS[kind] - {"kind"}
    if unknown:
        raise ConfigError(f"space.{sorted(unknown)[0]}", f"not a {kind} parameter")
    stencil = section.get("stencil", "fd").strip()
    if stencil not in ("fd", "spectral"):
        raise ConfigError("space.stencil", f"must be fd or spectral, got {stencil!r}")
    if stencil == "spectral" and kind != "circle":
        raise ConfigError("space.stencil", "the spectral stencil is only available on circles")
    out = {"kind": kind}
    if kind in ("interval", "circle"):
        if "n" not in section:
            raise ConfigError("space.n", "missing")
        out["n"] = parse_int(section["n"], "space.n")
        if kind == "interval" and "length" in section:
            out["length"] = parse_float(section["length"], "space.length")
        if kind == "circle" and "circumference" in section:
            out["circumference"] = parse_float(section["circumference"], "space.circumference")
    else:
        for key in ("edges", "weights", "k_lower"):
            if key not in section:
                raise ConfigError(f"space.{key}", "missing (required for graphs)")
        out["edges"] = parse_edges(section["edges"], "space.edges")
        out["weights"] = parse_floats(section["weights"], "space.weights")
    if "k_lower" in section:
        out["k_lower"] = parse_float(section["k_lower"], "space.k_lower")
    return out, stencil


def parse_config(text: str, experiment: str | None = None) -> ExperimentConfig:
    """Parse configuration text; raises :class:`ConfigError` naming the bad field.

    ``experiment`` supplies the experiment name when the file omits it; if
    both are given they must agree.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc).splitlines()[0]) from None
    if not cp.has_section("space"):
        raise ConfigError("space", "section missing")
    unknown_sections = set(cp.sections()) - {"experiment", "space", "params", "output"}
    if unknown_sections:
        raise ConfigError(sorted(unknown_sections)[0], "unknown section")
    exp = cp["experiment"] if cp.has_section("experiment") else {}
    name = exp.get("name", "").strip() or (experiment or "")
    if experiment is not None and name != experiment:
        raise ConfigError("experiment.name", f"file is for {name!r}, not {experiment!r}")
    if name not in EXPERIMENTS:
        raise ConfigError("experiment.name", f"unknown experiment {name!r}")
    seed = parse_int(exp.get("seed", "0"), "experiment.seed")
    if seed < 0:
        raise ConfigError("experiment.seed", "must be nonnegative")
    space, stencil = _parse_space(cp["space"])
    grammar = {**PARAMS[name], **_EXTRA}
    raw = dict(cp["params"]) if cp.has_section("params") else {}
    params = {}
    for key, text in raw.items():
        if key not in grammar:
            raise ConfigError(f"params.{key}", f"not a parameter of {name}")
        params[key] = _parse_value(grammar[key][0], text, f"params.{key}")
    for key, (_, default) in PARAMS[name].items():
        if key not in params:
            if default is None:
                raise ConfigError(f"params.{key}", "missing")
            params[key] = default
    out = cp["output"] if cp.has_section("output") else {}
    fmt = out.get("format", "csv").strip()
    if fmt not in FORMATS:
        raise ConfigError("output.format", f"must be csv or json, got {fmt!r}")
    return ExperimentConfig(name, space, params, seed, out.get("dir", "results").strip(), fmt, stencil)


def load_config(path, experiment: str | None = None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, experiment)
