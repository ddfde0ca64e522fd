"""Point files, run configuration and experiment report serialization.

Reports are written as ``<base>.json`` (parameters, summary, column types),
``<base>.csv`` (one row per cell) and, when raw records are kept,
``<base>.jsonl``.  Floats use the shortest decimal form that round-trips.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .experiments import SCHEMA_VERSION, ExperimentReport
from .geometry import Config, GeometryError


class InputError(ValueError):
    """A malformed input or configuration file."""


# ------------------------------------------------------------------ points


def _read_rows(path) -> list:
    rows = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append([float(tok) for tok in line.replace(",", " ").split()])
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: not a number ({exc})") from exc
    return rows


def read_points(path, dim: int | None = None) -> Config:
    """Whitespace separated coordinates, one point per line; ``#`` starts a comment."""
    rows = _read_rows(path)
    if not rows:
        if dim is None:
            raise InputError(f"{path}: no points and no dimension given")
        return Config(np.zeros((0, dim)), dim=dim)
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise InputError(f"{path}: rows have differing lengths {sorted(widths)}")
    pts = np.array(rows, dtype=float)
    if dim is not None and pts.shape[1] != dim:
        raise InputError(f"{path}: expected dimension {dim}, found {pts.shape[1]}")
    if not np.all(np.isfinite(pts)):
        raise InputError(f"{path}: non-finite coordinate")
    try:
        return Config(pts)
    except GeometryError as exc:
        raise InputError(f"{path}: {exc}") from exc


def write_points(path, phi: Config) -> None:
    with open(path, "w") as fh:
        for p in phi.points:
            fh.write(" ".join(_fmt(float(v)) for v in p) + "\n")


def read_radii(path, n: int | None = None) -> np.ndarray:
    rows = _read_rows(path)
    vals = np.array([v for r in rows for v in r], dtype=float)
    if n is not None and len(vals) != n:
        raise InputError(f"{path}: expected {n} radii, found {len(vals)}")
    return vals


def write_radii(path, radii) -> None:
    with open(path, "w") as fh:
        for r in np.asarray(radii, dtype=float):
            fh.write(_fmt(float(r)) + "\n")


def _fmt(v: float) -> str:
    return repr(float(v))


# ------------------------------------------------------------ run config

# keys that a config file may set, with their parsers
CONFIG_KEYS = {
    "d": int,
    "seed": int,
    "reps": int,
    "threads": int,
    "eps": float,
    "out": str,
    "points": str,
    "radii": str,
    "y": str,
    "r_cap": int,
    "delta": float,
    "thresholds": str,
    "volume_thresholds": str,
    "card_thresholds": str,
    "certificate": str,
    "L0": float,
    "Lmax": float,
    "functionals": str,
    "process": str,
    "n_grid": str,
    "shape": str,
    "deltas": str,
    "scales": str,
    "axis": int,
    "check_r": float,
    "r": float,
    "half_extent": int,
    "samples": int,
}


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; blank lines and ``#`` comments are ignored."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from exc
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise InputError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return out


def parse_list(text: str, cast=float) -> list:
    """Comma separated list, e.g. ``"0,0.05,0.1"``."""
    try:
        return [cast(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise InputError(f"bad list {text!r}: {exc}") from exc


@dataclass
class RunConfig:
    """Resolved settings for one CLI invocation."""

    command: str
    d: int | None = None
    seed: int = 0
    reps: int | None = None
    threads: int | None = None
    eps: float | None = None
    out: str | None = None
    grids: dict = field(default_factory=dict)
    window: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    GRID_KEYS = ("thresholds", "volume_thresholds", "card_thresholds", "n_grid", "deltas", "scales")
    WINDOW_KEYS = ("shape", "L0", "Lmax", "half_extent")
    TOP_KEYS = ("d", "seed", "reps", "threads", "eps", "out")

    @classmethod
    def build(cls, command: str, file_values: dict, cli_values: dict, allowed) -> "RunConfig":
        """Merge file values under CLI values; keys outside ``allowed`` are rejected."""
        bad = sorted(set(file_values) - set(allowed))
        if bad:
            raise InputError(f"keys not accepted by {command!r}: {', '.join(bad)}")
        merged = {k: v for k, v in file_values.items()}
        merged.update({k: v for k, v in cli_values.items() if v is not None})
        cfg = cls(command)
        for k, v in merged.items():
            if k in cls.TOP_KEYS:
                setattr(cfg, k, v)
            elif k in cls.GRID_KEYS:
                cfg.grids[k] = parse_list(v, int if k == "n_grid" else float) if isinstance(v, str) else list(v)
            elif k in cls.WINDOW_KEYS:
                cfg.window[k] = v
            else:
                cfg.options[k] = v
        return cfg


# --------------------------------------------------------------- reports


def _column_type(values) -> str:
    kinds = {type(v) for v in values}
    if kinds <= {bool, np.bool_}:
        return "bool"
    if kinds <= {int, np.int64, np.int32}:
        return "int"
    if kinds <= {int, float, np.int64, np.float64, np.int32}:
        return "float"
    return "str"


def _cell_text(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return _fmt(float(v))
    return str(v)


def _parse_cell(text: str, kind: str):
    if kind == "bool":
        return text == "true"
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def report_paths(base) -> dict:
    base = Path(base)
    return {ext: base.with_name(base.name + "." + ext) for ext in ("json", "csv", "jsonl")}


def serialize_report(report: ExperimentReport, base) -> dict:
    """Write the report next to ``base``; returns the paths written."""
    paths = report_paths(base)
    types = {c: _column_type([row[c] for row in report.cells]) for c in report.columns} if report.cells else {c: "str" for c in report.columns}
    head = {
        "schema_version": report.schema_version,
        "experiment": report.experiment,
        "params": _jsonable(report.params),
        "columns": list(report.columns),
        "column_types": types,
        "summary": _jsonable(report.summary),
        "rows": len(report.cells),
        "raw": report.raw is not None,
    }
    written = {}
    try:
        paths["json"].parent.mkdir(parents=True, exist_ok=True)
        paths["json"].write_text(json.dumps(head, indent=2, sort_keys=False) + "\n")
        written["json"] = paths["json"]
        with open(paths["csv"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(report.columns)
            for row in report.cells:
                w.writerow([_cell_text(row[c]) for c in report.columns])
        written["csv"] = paths["csv"]
        if report.raw is not None:
            with open(paths["jsonl"], "w") as fh:
                for rec in report.raw:
                    fh.write(json.dumps(_jsonable(rec)) + "\n")
            written["jsonl"] = paths["jsonl"]
    except OSError as exc:
        raise OSError(f"cannot write report at {exc.filename or base}: {exc.strerror or exc}") from exc
    return written


def read_report(base) -> ExperimentReport:
    paths = report_paths(base)
    try:
        head = json.loads(paths["json"].read_text())
        with open(paths["csv"], newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read report {base}: {exc}") from exc
    if head.get("schema_version") != SCHEMA_VERSION:
        raise InputError(f"{paths['json']}: unsupported schema version {head.get('schema_version')}")
    columns = head["columns"]
    if rows and rows[0] != columns:
        raise InputError(f"{paths['csv']}: header does not match the summary columns")
    types = head["column_types"]
    cells = [{c: _parse_cell(t, types[c]) for c, t in zip(columns, r)} for r in rows[1:]]
    raw = None
    if head.get("raw"):
        raw = [json.loads(line) for line in paths["jsonl"].read_text().splitlines() if line.strip()]
    return ExperimentReport(head["experiment"], head["params"], columns, cells, head["summary"], raw, head["schema_version"])

