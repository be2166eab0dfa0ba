"""JSON scene files: one flow, a charge measure, an optional mass measure."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .dsl import ParseError, to_source
from .fields import grid_points
from .flow import DEFAULT_EPSILON, FlowModel, SupportRegion
from .measure import ChargeMeasure


class SceneError(ValueError):
    """Malformed scene: schema violation, bad expression or inconsistent data."""


_vec3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_region = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["box", "ball", "points"]},
        "min": _vec3, "max": _vec3, "center": _vec3,
        "radius": {"type": "number"},
        "points": {"type": "array", "items": _vec3, "minItems": 1},
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"type": {"const": "box"}}}, "then": {"required": ["min", "max"]}},
        {"if": {"properties": {"type": {"const": "ball"}}}, "then": {"required": ["center", "radius"]}},
        {"if": {"properties": {"type": {"const": "points"}}}, "then": {"required": ["points"]}},
    ],
}
_measure = {
    "type": "object",
    "properties": {
        "atoms": {"type": "array", "items": {
            "type": "object", "required": ["r0", "weight"],
            "properties": {"r0": _vec3, "weight": {"type": "number"}},
            "additionalProperties": False}},
        "density": {"type": ["string", "null"]},
        "region": _region,
        "quadrature": {"type": "object", "properties": {
            "cells": {"type": "integer", "minimum": 1},
            "nodes": {"type": "integer", "minimum": 1, "maximum": 32}},
            "additionalProperties": False},
    },
    "additionalProperties": False,
}
SCENE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["flow", "support", "charge"],
    "properties": {
        "name": {"type": "string"},
        "flow": {
            "type": "object",
            "required": ["x", "y", "z", "v1"],
            "properties": {
                "x": {"type": "string"}, "y": {"type": "string"}, "z": {"type": "string"},
                "t0": {"type": "number"},
                "v1": {"type": "number"},
                "params": {"type": "object", "additionalProperties": {"type": "number"}},
            },
            "additionalProperties": False,
        },
        "support": _region,
        "charge": _measure,
        "mass": _measure,
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "tolerances": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
    },
    "additionalProperties": False,
}


@dataclass(frozen=True)
class Scene:
    name: str
    flow: FlowModel
    charge: ChargeMeasure
    mass: ChargeMeasure | None = None
    tolerances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        f = self.flow
        x, y, z = (to_source(e) for e in f.exprs)
        out: dict[str, Any] = {
            "name": self.name,
            "flow": {"x": x, "y": y, "z": z, "t0": f.t0, "v1": f.v1, "params": dict(f.params)},
            "support": f.support.to_dict(),
            "charge": _measure_to_dict(self.charge),
        }
        if self.mass is not None:
            out["mass"] = _measure_to_dict(self.mass)
        out["epsilon"] = f.singularity_epsilon
        if self.tolerances:
            out["tolerances"] = dict(self.tolerances)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


def _measure_to_dict(m: ChargeMeasure) -> dict:
    out: dict[str, Any] = {"atoms": [{"r0": list(r0), "weight": w} for r0, w in m.atoms]}
    if m.density is not None:
        src = m.density_source
        if src is None:
            raise SceneError("a callable density cannot be serialized")
        out["density"] = src
        out["region"] = m.region.to_dict()
        out["quadrature"] = {"cells": m.cells, "nodes": m.nodes}
    return out


def _path(err: jsonschema.ValidationError) -> str:
    parts = ["scene"]
    for p in err.absolute_path:
        parts.append(f"[{p}]" if isinstance(p, int) else f".{p}")
    return "".join(parts)


def region_from_dict(d: dict) -> SupportRegion:
    kind = d["type"]
    if kind == "box":
        return SupportRegion.box(d["min"], d["max"])
    if kind == "ball":
        return SupportRegion.ball(d["center"], d["radius"])
    return SupportRegion.point_set(d["points"])


def _measure_from_dict(d: dict, params: dict, support: SupportRegion, where: str) -> ChargeMeasure:
    atoms = [(a["r0"], a["weight"]) for a in d.get("atoms", [])]
    density = d.get("density")
    region = None
    if density is not None:
        region = region_from_dict(d["region"]) if "region" in d else support
    q = d.get("quadrature", {})
    try:
        m = ChargeMeasure.from_spec(atoms, density, region, q.get("cells", 4), q.get("nodes", 4), params)
        m.check_inside(support)
    except ParseError as exc:
        raise SceneError(f"scene.{where}.density: {exc}") from exc
    except ValueError as exc:
        raise SceneError(f"scene.{where}: {exc}") from exc
    return m


def scene_from_dict(doc: Any) -> Scene:
    validator = jsonschema.Draft202012Validator(SCENE_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        raise SceneError(f"{_path(err)}: {err.message}")
    fd = doc["flow"]
    params = {k: float(v) for k, v in fd.get("params", {}).items()}
    try:
        support = region_from_dict(doc["support"])
    except ValueError as exc:
        raise SceneError(f"scene.support: {exc}") from exc
    try:
        flow = FlowModel.from_strings(fd["x"], fd["y"], fd["z"], params=params, support=support,
                                      t0=fd.get("t0", 0.0), v1=fd["v1"],
                                      singularity_epsilon=doc.get("epsilon", DEFAULT_EPSILON))
    except ParseError as exc:
        raise SceneError(f"scene.flow: {exc}") from exc
    except ValueError as exc:
        raise SceneError(f"scene.flow: {exc}") from exc
    charge = _measure_from_dict(doc["charge"], params, support, "charge")
    mass = _measure_from_dict(doc["mass"], params, support, "mass") if "mass" in doc else None
    return Scene(doc.get("name", "scene"), flow, charge, mass, dict(doc.get("tolerances", {})))


def builtin_scenes() -> list[str]:
    files = resources.files("flowfields").joinpath("scenes")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_scene(path: str | Path) -> Scene:
    """Load a scene file, or a built-in scene by name (e.g. ``circular``)."""
    p = Path(path)
    if p.is_file():
        text = p.read_text(encoding="utf-8")
    elif str(path) in builtin_scenes():
        text = resources.files("flowfields").joinpath("scenes", f"{path}.json").read_text(encoding="utf-8")
    else:
        raise SceneError(f"no scene file or built-in scene named {str(path)!r}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"scene: invalid JSON ({exc})") from exc
    return scene_from_dict(doc)


def loads_scene(text: str) -> Scene:
    try:
        return scene_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise SceneError(f"scene: invalid JSON ({exc})") from exc


# --------------------------------------------------------------------------

AXES = ("x", "y", "z", "t")


@dataclass(frozen=True)
class GridSpec:
    """start:stop:count per axis; a single number means one sample."""

    x: tuple = (0.0, 0.0, 1)
    y: tuple = (0.0, 0.0, 1)
    z: tuple = (0.0, 0.0, 1)
    t: tuple = (0.0, 0.0, 1)

    def __post_init__(self):
        for ax in AXES:
            start, stop, count = getattr(self, ax)
            if count < 1:
                raise ValueError(f"grid axis {ax}: count must be >= 1")
            if stop < start:
                raise ValueError(f"grid axis {ax}: stop must be >= start")
            if count == 1 and stop != start:
                raise ValueError(f"grid axis {ax}: a single sample needs start == stop")

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        axes = {}
        for item in filter(None, (s.strip() for s in text.split(","))):
            key, sep, val = item.partition("=")
            key = key.strip()
            if not sep or key not in AXES:
                raise ValueError(f"bad grid item {item!r}; expected x=, y=, z= or t=")
            if key in axes:
                raise ValueError(f"grid axis {key} given twice")
            parts = val.split(":")
            try:
                if len(parts) == 1:
                    v = float(parts[0])
                    axes[key] = (v, v, 1)
                elif len(parts) == 3:
                    axes[key] = (float(parts[0]), float(parts[1]), int(parts[2]))
                else:
                    raise ValueError
            except ValueError:
                raise ValueError(f"bad grid axis {item!r}; expected start:stop:count or a number") from None
        return cls(**axes)

    def axis_values(self, ax: str) -> np.ndarray:
        start, stop, count = getattr(self, ax)
        return np.linspace(start, stop, count)

    def points(self) -> np.ndarray:
        return grid_points({ax: self.axis_values(ax) for ax in AXES})
