"""TOML run configuration with a strict schema.

Every key is checked against the schema below; unknown keys, wrong types and
out-of-range values raise ``SchemaError`` carrying the dotted field path.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .spacetime import FAMILIES, ModelSpec, SampledSpacetime, SurfaceGraph, make_surface, warp_function


class SchemaError(ValueError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


_NUM = (int, float)

# section -> key -> (types, required)
SCHEMA = {
    "model": {
        "family": (str, True),
        "resolution": (list, True),
        "t_range": (list, True),
        "x_range": (list, False),
        "circumference": (_NUM, False),
        "half_width": (_NUM, False),
        "warp": (str, False),
        "periodic": (bool, False),
    },
    "graph": {"radius": (int, False)},
    "group": {"rotation": (int, False), "reflection": (bool, False), "time_reflection": (bool, False)},
    "geroch": {
        "damping_scale": (_NUM, False),
        "foliation_levels": (list, False),
        "cauchy_threshold": (_NUM, False),
        "chains": (list, False),
        "noncauchy_gap": (_NUM, False),
    },
    "steep": {
        "bump_length": (_NUM, False),
        "band_rows": (int, False),
        "max_depth_rows": (int, False),
        "separation": (str, False),
        "cap": (_NUM, False),
        "grid": (_NUM, False),
        "collar_rows": (int, False),
    },
    "surfaces": {
        "minus": ((str, int, float), False),
        "plus": ((str, int, float), False),
        "f_minus": (_NUM, False),
        "f_plus": (_NUM, False),
        "levels": (list, False),
    },
    "invariant": {"steep": (bool, False)},
    "export": {"fields": (list, False), "edge_list": (bool, False)},
}

EXPORT_FIELDS = ("geroch", "t_minus", "t_plus", "steep", "adapted", "invariant")


def _check_type(path, value, types):
    ts = types if isinstance(types, tuple) else (types,)
    if isinstance(value, bool) and bool not in ts:
        raise SchemaError(path, f"expected {_tname(types)}, got a boolean")
    if not isinstance(value, ts):
        raise SchemaError(path, f"expected {_tname(types)}, got {type(value).__name__}")


def _tname(types):
    if isinstance(types, tuple):
        return " or ".join(t.__name__ for t in types)
    return types.__name__


def _pair(path, v, kind=_NUM, increasing=True):
    if len(v) != 2 or not all(isinstance(a, kind) and not isinstance(a, bool) for a in v):
        raise SchemaError(path, "expected a pair of numbers")
    if increasing and not v[0] < v[1]:
        raise SchemaError(path, "expected an increasing pair")
    return tuple(v)


@dataclass
class RunConfig:
    model: ModelSpec
    radius: int = 2
    rotation: int = 1
    reflection: bool = False
    time_reflection: bool = False
    damping_scale: float | None = None
    foliation_levels: list = field(default_factory=list)
    cauchy_threshold: float | None = None
    chains: tuple | None = None
    noncauchy_gap: float = 0.05
    steep: dict = field(default_factory=dict)
    collar_rows: int = 8
    surface_minus: object = None
    surface_plus: object = None
    f_minus: float = -1.0
    f_plus: float = 1.0
    levels: list = field(default_factory=list)   # (surface spec, value)
    invariant_steep: bool = False
    export_fields: list = field(default_factory=lambda: ["geroch"])
    edge_list: bool = False
    has_group: bool = False

    def surface(self, st: SampledSpacetime, spec) -> SurfaceGraph:
        """Surface t = u(x) from a constant or an expression in x."""
        if isinstance(spec, str):
            u = warp_function(spec)(np.zeros_like(st.x), st.x)
        else:
            u = np.full(st.nx, float(spec))
        return make_surface(st, u)


def parse_config(data: dict) -> RunConfig:
    for sec, body in data.items():
        if sec not in SCHEMA:
            raise SchemaError(sec, f"unknown section; expected one of {sorted(SCHEMA)}")
        if not isinstance(body, dict):
            raise SchemaError(sec, "expected a table")
        for key, value in body.items():
            if key not in SCHEMA[sec]:
                raise SchemaError(f"{sec}.{key}", "unknown key")
            _check_type(f"{sec}.{key}", value, SCHEMA[sec][key][0])
    for sec, keys in SCHEMA.items():
        for key, (_, required) in keys.items():
            if required and key not in data.get(sec, {}):
                raise SchemaError(f"{sec}.{key}", "missing required key")

    m = data["model"]
    if m["family"] not in FAMILIES:
        raise SchemaError("model.family", f"unknown family {m['family']!r}; expected one of {FAMILIES}")
    res = m["resolution"]
    if len(res) != 2 or not all(isinstance(r, int) and not isinstance(r, bool) and r >= 3 for r in res):
        raise SchemaError("model.resolution", "expected two integers >= 3")
    kw = dict(family=m["family"], resolution=tuple(res), t_range=_pair("model.t_range", m["t_range"]))
    if "x_range" in m:
        kw["x_range"] = _pair("model.x_range", m["x_range"])
    for key in ("circumference", "half_width"):
        if key in m:
            if m[key] <= 0:
                raise SchemaError(f"model.{key}", "must be positive")
            kw[key] = float(m[key])
    for key in ("warp", "periodic"):
        if key in m:
            kw[key] = m[key]
    try:
        spec = ModelSpec(**kw)
    except ValueError as exc:
        raise SchemaError("model", str(exc)) from exc
    cfg = RunConfig(model=spec)

    g = data.get("graph", {})
    cfg.radius = g.get("radius", 2)
    if cfg.radius < 1:
        raise SchemaError("graph.radius", "must be >= 1")

    grp = data.get("group", {})
    cfg.has_group = bool(grp)
    cfg.rotation = grp.get("rotation", 1)
    if cfg.rotation < 1:
        raise SchemaError("group.rotation", "must be >= 1")
    cfg.reflection = grp.get("reflection", False)
    cfg.time_reflection = grp.get("time_reflection", False)

    ge = data.get("geroch", {})
    cfg.damping_scale = float(ge["damping_scale"]) if ge.get("damping_scale") else None
    levels = ge.get("foliation_levels", [])
    if not all(isinstance(v, _NUM) and not isinstance(v, bool) for v in levels):
        raise SchemaError("geroch.foliation_levels", "expected a list of numbers")
    cfg.foliation_levels = [float(v) for v in levels]
    if "cauchy_threshold" in ge:
        if ge["cauchy_threshold"] <= 0:
            raise SchemaError("geroch.cauchy_threshold", "must be positive")
        cfg.cauchy_threshold = float(ge["cauchy_threshold"])
    if "chains" in ge:
        cfg.chains = _pair("geroch.chains", ge["chains"], increasing=False)
    cfg.noncauchy_gap = float(ge.get("noncauchy_gap", 0.05))

    st_ = dict(data.get("steep", {}))
    cfg.collar_rows = st_.pop("collar_rows", 8)
    if "separation" in st_ and st_["separation"] not in ("interval", "graph"):
        raise SchemaError("steep.separation", "expected 'interval' or 'graph'")
    for key in ("band_rows", "max_depth_rows"):
        if key in st_ and st_[key] < 1:
            raise SchemaError(f"steep.{key}", "must be >= 1")
    cfg.steep = st_

    su = data.get("surfaces", {})
    cfg.surface_minus = su.get("minus")
    cfg.surface_plus = su.get("plus")
    cfg.f_minus = float(su.get("f_minus", -1.0))
    cfg.f_plus = float(su.get("f_plus", 1.0))
    for i, lv in enumerate(su.get("levels", [])):
        path = f"surfaces.levels[{i}]"
        if not isinstance(lv, dict):
            raise SchemaError(path, "expected a table with keys 'u' and 'value'")
        extra = set(lv) - {"u", "value"}
        if extra:
            raise SchemaError(f"{path}.{sorted(extra)[0]}", "unknown key")
        for key in ("u", "value"):
            if key not in lv:
                raise SchemaError(f"{path}.{key}", "missing required key")
        _check_type(f"{path}.u", lv["u"], (str, int, float))
        _check_type(f"{path}.value", lv["value"], _NUM)
        cfg.levels.append((lv["u"], float(lv["value"])))

    cfg.invariant_steep = data.get("invariant", {}).get("steep", False)
    ex = data.get("export", {})
    fl = ex.get("fields", ["geroch"])
    for i, name in enumerate(fl):
        if name not in EXPORT_FIELDS:
            raise SchemaError(f"export.fields[{i}]", f"unknown field {name!r}; expected one of {EXPORT_FIELDS}")
    cfg.export_fields = list(fl)
    cfg.edge_list = ex.get("edge_list", False)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise SchemaError("<file>", f"invalid TOML: {exc}") from exc
    return parse_config(data)
