"""Write result bundles to disk with bit-stable formatting.

CSV cells use ``%.17g`` for floats, plain integers and ``true``/``false``.
JSON uses the shortest round-trip float representation, sorted keys and
the strings ``"NaN"``, ``"Infinity"``, ``"-Infinity"`` for non-finite values.
Every bundle produces ``summary.json``; tables go to ``<name>.csv`` or, for
the json format, to a single ``tables.json``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from heatldp.experiments.runner import ResultBundle

_NUMBER = {"anyOf": [{"type": "number"}, {"enum": ["NaN", "Infinity", "-Infinity"]}]}

SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "experiment", "config", "window_check", "passed", "assertions", "tables"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": "heatldp.result/1"},
        "experiment": {"type": "string"},
        "config": {
            "type": "object",
            "required": ["experiment", "seed", "space", "stencil", "params"],
        },
        "window_check": {
            "type": "object",
            "required": ["quantity", "lo", "hi", "values", "ok", "skipped"],
            "properties": {
                "lo": _NUMBER,
                "hi": _NUMBER,
                "values": {"type": "array", "items": _NUMBER},
                "ok": {"type": "boolean"},
                "skipped": {"type": "array", "items": _NUMBER},
            },
        },
        "passed": {"type": "boolean"},
        "assertions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "invariant", "measured", "relation", "tolerance", "passed"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "invariant": {"type": "string", "minLength": 1},
                    "measured": _NUMBER,
                    "relation": {"enum": ["<=", ">=", "=="]},
                    "tolerance": _NUMBER,
                    "passed": {"type": "boolean"},
                },
            },
        },
        "tables": {"type": "array", "items": {"type": "string"}},
    },
}


def format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def _plain(v):
    """JSON-ready copy with non-finite floats spelled out."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "NaN"
        if math.isinf(f):
            return "Infinity" if f > 0 else "-Infinity"
        return f
    return v


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(format_cell(c) for c in row) for row in rows)
    return "\n".join(lines) + "\n"


def emit_report(bundle: ResultBundle, out_dir, fmt: str = "csv") -> list:
    """Write the bundle under ``out_dir`` and return the written paths."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be csv or json, got {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def write(name, text):
        path = out / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        written.append(path)

    if fmt == "csv":
        for t in bundle.tables:
            write(f"{t.name}.csv", csv_text(t.header, t.rows))
    else:
        tables = {t.name: {"header": list(t.header), "rows": t.rows} for t in bundle.tables}
        write("tables.json", dumps(tables))
    write("summary.json", dumps(bundle.summary()))
    return written
