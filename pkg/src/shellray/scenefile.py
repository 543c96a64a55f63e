"""Scene description files.

A scene file is TOML: an optional [domain] box, one or more [[primitive]]
tables (sphere / box / torus), one or more [[camera]] tables, and an
optional background color.  `load_scene` builds the analytic scene plus its
cameras; `scene_to_toml` writes an equivalent document back out, which the
command-line tools use to echo effective settings next to their outputs.
"""

from __future__ import annotations

import numbers
import os

try:
    import tomllib
except ModuleNotFoundError:      # stdlib from 3.11 on
    import tomli as tomllib

from dataclasses import dataclass

from .errors import ConfigError
from .field import AnalyticScene, Box, BoxPrim, Sphere, Torus
from .render import Camera

_PRIMITIVE_KEYS = {
    "sphere": {"kind", "center", "radius", "kernel_size", "color", "op"},
    "box": {"kind", "center", "half_extent", "kernel_size", "color", "op"},
    "torus": {"kind", "center", "major_radius", "minor_radius",
              "kernel_size", "color", "op"},
}
_CAMERA_KEYS = {"position", "look_at", "up", "vertical_fov", "width", "height"}


@dataclass
class SceneSpec:
    """Parsed scene: analytic field, cameras, and background color."""

    scene: AnalyticScene
    cameras: list[Camera]
    background: tuple = (0.0, 0.0, 0.0)
    name: str = "scene"


def _number(table, key, where, default=None):
    if key not in table:
        if default is None:
            raise ConfigError(f"{where}: missing key {key!r}")
        return float(default)
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: {key!r} must be a number")
    return float(v)


def _integer(table, key, where, default):
    v = table.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}: {key!r} must be an integer")
    return v


def _vec3(table, key, where, default=None):
    if key not in table:
        if default is None:
            raise ConfigError(f"{where}: missing key {key!r}")
        return tuple(float(x) for x in default)
    v = table[key]
    ok = (isinstance(v, list) and len(v) == 3
          and all(isinstance(x, (int, float)) and not isinstance(x, bool)
                  for x in v))
    if not ok:
        raise ConfigError(f"{where}: {key!r} must be a list of three numbers")
    return tuple(float(x) for x in v)


def _reject_unknown(table, allowed, where):
    extra = sorted(set(table) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(repr, extra))}")


def _parse_primitive(table, index):
    where = f"primitive #{index + 1}"
    if not isinstance(table, dict):
        raise ConfigError(f"{where}: must be a table")
    kind = table.get("kind")
    if kind not in _PRIMITIVE_KEYS:
        raise ConfigError(f"{where}: 'kind' must be one of "
                          f"{sorted(_PRIMITIVE_KEYS)}, got {kind!r}")
    _reject_unknown(table, _PRIMITIVE_KEYS[kind], where)
    common = dict(
        kernel_size=_number(table, "kernel_size", where),
        color=_vec3(table, "color", where),
        op=table.get("op", "union"),
    )
    if not isinstance(common["op"], str):
        raise ConfigError(f"{where}: 'op' must be a string")
    center = _vec3(table, "center", where)
    if kind == "sphere":
        return Sphere(center, _number(table, "radius", where), **common)
    if kind == "box":
        return BoxPrim(center, _vec3(table, "half_extent", where), **common)
    return Torus(center, _number(table, "major_radius", where),
                 _number(table, "minor_radius", where), **common)


def _parse_camera(table, index):
    where = f"camera #{index + 1}"
    if not isinstance(table, dict):
        raise ConfigError(f"{where}: must be a table")
    _reject_unknown(table, _CAMERA_KEYS, where)
    return Camera(
        position=_vec3(table, "position", where),
        look_at=_vec3(table, "look_at", where),
        up=_vec3(table, "up", where, default=(0.0, 1.0, 0.0)),
        vertical_fov=_number(table, "vertical_fov", where, default=45.0),
        width=_integer(table, "width", where, 128),
        height=_integer(table, "height", where, 128),
    )


def parse_scene(text: str, name: str = "scene") -> SceneSpec:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{name}: invalid TOML: {exc}") from exc
    _reject_unknown(doc, {"name", "background", "domain", "primitive", "camera"},
                    name)

    domain_tab = doc.get("domain", {})
    if not isinstance(domain_tab, dict):
        raise ConfigError(f"{name}: [domain] must be a table")
    _reject_unknown(domain_tab, {"lo", "hi"}, f"{name}: domain")
    domain = Box(_vec3(domain_tab, "lo", "domain", default=(-1.0, -1.0, -1.0)),
                 _vec3(domain_tab, "hi", "domain", default=(1.0, 1.0, 1.0)))

    prims_raw = doc.get("primitive", [])
    if not isinstance(prims_raw, list) or not prims_raw:
        raise ConfigError(f"{name}: needs at least one [[primitive]] table")
    primitives = [_parse_primitive(t, i) for i, t in enumerate(prims_raw)]

    cams_raw = doc.get("camera", [])
    if not isinstance(cams_raw, list) or not cams_raw:
        raise ConfigError(f"{name}: needs at least one [[camera]] table")
    cameras = [_parse_camera(t, i) for i, t in enumerate(cams_raw)]

    return SceneSpec(
        scene=AnalyticScene(primitives, domain=domain),
        cameras=cameras,
        background=_vec3(doc, "background", name, default=(0.0, 0.0, 0.0)),
        name=str(doc.get("name", name)),
    )


def load_scene(path) -> SceneSpec:
    """Parse the scene file at `path`; missing file raises ConfigError."""
    if not os.path.exists(path):
        raise ConfigError(f"scene file not found: {path}")
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse_scene(text, name=str(path))


# ---------------------------------------------------------------------------
# emission (tomllib has no writer; this covers the value types we use)
# ---------------------------------------------------------------------------

def format_toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, numbers.Integral):
        return repr(int(v))
    if isinstance(v, numbers.Real):
        return repr(float(v))
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(format_toml_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize {type(v).__name__} to TOML")


def dump_toml(doc: dict) -> str:
    """Serialize {str: scalar | list | dict | list[dict]} one level deep."""
    lines = []
    tables = []
    for key, val in doc.items():
        if isinstance(val, dict):
            tables.append((f"[{key}]", val))
        elif isinstance(val, list) and val and isinstance(val[0], dict):
            tables.extend((f"[[{key}]]", item) for item in val)
        else:
            lines.append(f"{key} = {format_toml_value(val)}")
    for header, table in tables:
        lines.append("")
        lines.append(header)
        for key, val in table.items():
            lines.append(f"{key} = {format_toml_value(val)}")
    return "\n".join(lines) + "\n"


def _primitive_table(prim) -> dict:
    if isinstance(prim, Sphere):
        t = {"kind": "sphere", "center": list(prim.center),
             "radius": prim.radius}
    elif isinstance(prim, BoxPrim):
        t = {"kind": "box", "center": list(prim.center),
             "half_extent": list(prim.half_extent)}
    elif isinstance(prim, Torus):
        t = {"kind": "torus", "center": list(prim.center),
             "major_radius": prim.major_radius,
             "minor_radius": prim.minor_radius}
    else:
        raise ConfigError(f"unknown primitive type {type(prim).__name__}")
    t.update(kernel_size=prim.kernel_size, color=list(prim.color), op=prim.op)
    return t


def scene_to_toml(spec: SceneSpec) -> str:
    doc = {
        "name": spec.name,
        "background": list(spec.background),
        "domain": {"lo": spec.scene.domain.lo.tolist(),
                   "hi": spec.scene.domain.hi.tolist()},
        "primitive": [_primitive_table(p) for p in spec.scene.primitives],
        "camera": [{
            "position": list(c.position),
            "look_at": list(c.look_at),
            "up": list(c.up),
            "vertical_fov": c.vertical_fov,
            "width": c.width,
            "height": c.height,
        } for c in spec.cameras],
    }
    return dump_toml(doc)
