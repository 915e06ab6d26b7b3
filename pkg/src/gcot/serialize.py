"""Versioned JSON documents for densities, plans and results."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import jsonschema
import numpy as np

from .core import DiscreteDensity, GCPlan
from .monge1d import GridDensity1D

SCHEMA_VERSION = "gcot/v1"

_number_list = {"type": "array", "items": {"type": "number"}}

DENSITY_SCHEMA = {
    "type": "object",
    "required": ["points", "masses"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "dim": {"type": "integer", "minimum": 1},
        "points": {"type": "array", "minItems": 1,
                   "items": {"oneOf": [{"type": "number"}, {**_number_list, "minItems": 1}]}},
        "masses": {**_number_list, "minItems": 1, "items": {"type": "number", "minimum": 0}},
    },
}

PLAN_SCHEMA = {
    "type": "object",
    "required": ["nmax", "entries"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "nmax": {"type": "integer", "minimum": 0},
        "m": {"type": "integer", "minimum": 0},
        "points": {"type": "array"},
        "entries": {"type": "array", "items": {
            "type": "object", "required": ["occ", "w"],
            "properties": {"occ": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                           "w": {"type": "number", "minimum": 0}}}},
    },
}

GRID_SCHEMA = {
    "type": "object",
    "required": ["breakpoints", "densities"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "breakpoints": {**_number_list, "minItems": 2},
        "densities": {**_number_list, "minItems": 1},
    },
}


class InputError(ValueError):
    """A malformed input document."""


def _validate(doc, schema, what: str):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"invalid {what} at {where}: {exc.message}") from None


def _load(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc})") from None


def density_from_dict(doc: dict) -> DiscreteDensity:
    _validate(doc, DENSITY_SCHEMA, "density")
    pts = np.array(doc["points"], dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if "dim" in doc and pts.shape[1] != doc["dim"]:
        raise InputError(f"points have dimension {pts.shape[1]}, expected {doc['dim']}")
    try:
        return DiscreteDensity(pts, np.array(doc["masses"], dtype=float))
    except ValueError as exc:
        raise InputError(str(exc)) from None


def density_to_dict(rho: DiscreteDensity) -> dict:
    return {"schema": SCHEMA_VERSION, "dim": rho.dim,
            "points": rho.points.tolist(), "masses": rho.masses.tolist()}


def load_density(path) -> DiscreteDensity:
    return density_from_dict(_load(path))


def plan_from_dict(doc: dict) -> GCPlan:
    _validate(doc, PLAN_SCHEMA, "plan")
    try:
        return GCPlan({tuple(e["occ"]): e["w"] for e in doc["entries"]},
                      nmax=doc["nmax"], m=doc.get("m", -1))
    except ValueError as exc:
        raise InputError(str(exc)) from None


def plan_to_dict(plan: GCPlan, points=None) -> dict:
    out = {"schema": SCHEMA_VERSION, "nmax": plan.nmax, "m": plan.m,
           "entries": [{"occ": list(o), "w": w} for o, w in plan]}
    if points is not None:
        out["points"] = np.asarray(points, dtype=float).tolist()
    return out


def load_plan(path) -> tuple[GCPlan, np.ndarray | None]:
    doc = _load(path)
    plan = plan_from_dict(doc)
    pts = np.array(doc["points"], dtype=float) if "points" in doc else None
    return plan, pts


def grid_from_dict(doc: dict) -> GridDensity1D:
    _validate(doc, GRID_SCHEMA, "grid density")
    try:
        return GridDensity1D(np.array(doc["breakpoints"]), np.array(doc["densities"]))
    except ValueError as exc:
        raise InputError(str(exc)) from None


def load_grid(path) -> GridDensity1D:
    return grid_from_dict(_load(path))


def jsonable(obj):
    """Convert numpy values and non-finite floats into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        return x
    return obj


def dumps(doc: dict) -> str:
    """Deterministic serialization: sorted keys, shortest round-trip floats."""
    body = {"schema": SCHEMA_VERSION, **doc}
    return json.dumps(jsonable(body), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, doc: dict):
    Path(path).write_text(dumps(doc))


def csv_text(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def write_csv(path, rows):
    Path(path).write_text(csv_text(rows), newline="")
