"""Scenario files: YAML schema, validation with line numbers, overrides, presets.

A scenario file looks like::

    name: flight3_40m_5MHz
    seed: 2025
    trials_per_epoch: 1
    sensors:
      reference_index: 0
      positions:
        - {name: LW2, x: -420, y: 380, z: 10}      # or lat/lon/alt_m
    radio: {bandwidth_hz: 5.0e+6}
    trajectory:
      altitude_m: 40
      sample_interval_s: 1
      waypoints:
        - {label: A, x: -250, y: -150}
        - {label: B, x: -100, y: 250, hover_s: 60}
    obstacles:
      - {type: box, min: [0, 0, 0], max: [10, 10, 20]}
      - {type: cylinder, center: [50, 50], radius: 30, height: 25}
    bias: {kind: exponential, mean_m: 30}

Geodetic sensors are mapped to ENU around ``origin`` (lat, lon, alt_m),
which defaults to the centroid of the geodetic sensor coordinates.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import fields
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import yaml

from tdoaloc.channel import RadioConfig
from tdoaloc.geometry import Box, Cylinder, SensorNetwork, Trajectory, Waypoint, geodetic_to_enu
from tdoaloc.sim import Scenario
from tdoaloc.tdoa import NlosBiasModel

RADIO_KEYS = tuple(f.name for f in fields(RadioConfig))
BIAS_KEYS = ("kind", "mean_m", "std_m", "low_m", "high_m")
TOP_KEYS = (
    "name", "seed", "trials_per_epoch", "speed_mps", "noise_scale", "init_altitude_m",
    "outlier_threshold_m", "origin", "sensors", "radio", "trajectory", "obstacles", "bias",
)
_OVERRIDE_SECTIONS = ("radio", "trajectory", "bias", "sensors")


class ScenarioError(ValueError):
    """Invalid scenario content; ``line`` is 1-based when known."""

    def __init__(self, message: str, path: tuple = (), line: int | None = None, source: str = "<scenario>"):
        self.message = message
        self.path = tuple(path)
        self.line = line
        self.source = source
        super().__init__(str(self))

    def __str__(self) -> str:
        where = f"{self.source}:{self.line}" if self.line else self.source
        key = ".".join(str(p) for p in self.path)
        return f"{where}: {key + ': ' if key else ''}{self.message}"


def list_presets() -> list[str]:
    root = resources.files("tdoaloc") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def preset_text(name: str) -> str:
    return (resources.files("tdoaloc") / "presets" / f"{name}.yaml").read_text(encoding="utf-8")


def read_scenario_source(path_or_preset: str | Path) -> tuple[str, str]:
    """Return (text, source label) for a file path or bundled preset name."""
    p = Path(path_or_preset)
    if p.is_file():
        return p.read_text(encoding="utf-8"), str(p)
    if str(path_or_preset) in list_presets():
        return preset_text(str(path_or_preset)), f"preset:{path_or_preset}"
    raise FileNotFoundError(f"no scenario file or preset named {path_or_preset!r}")


def parse_override(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise ScenarioError(f"override {item!r} is not key=value")
    key, value = item.split("=", 1)
    parsed = yaml.safe_load(value)
    if isinstance(parsed, str):
        # YAML 1.1 reads 2.5e6 (no dot) as a string
        try:
            parsed = float(parsed)
        except ValueError:
            pass
    return key.strip(), parsed


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    """Set ``key=value`` pairs on a raw scenario mapping.

    Keys are dotted paths (``radio.bandwidth_hz``) or bare names looked up at
    the top level and then in the radio, trajectory, bias and sensors sections.
    """
    raw = copy.deepcopy(raw)
    for item in overrides:
        key, value = parse_override(item)
        parts = key.split(".")
        if len(parts) == 1:
            name = parts[0]
            if name in TOP_KEYS:
                parts = [name]
            else:
                hits = [s for s in _OVERRIDE_SECTIONS if isinstance(raw.get(s), dict) and name in raw[s]]
                if hits:
                    parts = [hits[0], name]
                elif name in RADIO_KEYS:
                    parts = ["radio", name]
                elif name in BIAS_KEYS:
                    parts = ["bias", name]
                else:
                    raise ScenarioError(f"unknown override key {key!r}")
        node = raw
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ScenarioError(f"override path {key!r} does not name a mapping")
        node[parts[-1]] = value
    return raw


def scenario_hash(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _line_of(node, path: tuple) -> int | None:
    """1-based line of the deepest node along ``path`` in a composed YAML tree."""
    best = node.start_mark.line + 1 if node is not None else None
    for p in path:
        nxt = None
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == p:
                    best = k.start_mark.line + 1
                    nxt = v
                    break
        elif isinstance(node, yaml.SequenceNode) and isinstance(p, int) and p < len(node.value):
            nxt = node.value[p]
            best = nxt.start_mark.line + 1
        if nxt is None:
            break
        node = nxt
    return best


class _Reader:
    """Typed field access that raises :class:`ScenarioError` with the key path."""

    def __init__(self, raw: dict):
        self.raw = raw

    def get(self, path: tuple, default: Any = ..., kind: str = "float"):
        node: Any = self.raw
        for p in path:
            if isinstance(node, dict) and p in node:
                node = node[p]
            elif isinstance(node, list) and isinstance(p, int) and p < len(node):
                node = node[p]
            else:
                if default is ...:
                    raise ScenarioError("required field is missing", path)
                return default
        return self.coerce(node, path, kind)

    @staticmethod
    def coerce(v: Any, path: tuple, kind: str):
        try:
            if kind == "float":
                if isinstance(v, bool):
                    raise TypeError
                out = float(v)
                if not math.isfinite(out):
                    raise ValueError
                return out
            if kind == "int":
                if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
                    raise TypeError
                if isinstance(v, int):
                    return v
                f = float(v)
                if not f.is_integer():
                    raise ValueError
                return int(v) if isinstance(v, str) and v.strip().lstrip("-").isdigit() else int(f)
            if kind == "str":
                return str(v)
            if kind == "vec":
                return [float(x) for x in v]
            if kind in ("list", "dict"):
                want = list if kind == "list" else dict
                if not isinstance(v, want):
                    raise TypeError
                return v
            return v
        except (TypeError, ValueError):
            raise ScenarioError(f"expected {kind}, got {v!r}", path) from None


def build_scenario(raw: dict) -> Scenario:
    """Validate a raw mapping into a :class:`Scenario` (errors carry key paths)."""
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a mapping")
    unknown = sorted(set(raw) - set(TOP_KEYS))
    if unknown:
        raise ScenarioError(f"unknown top-level key {unknown[0]!r}", (unknown[0],))
    r = _Reader(raw)
    net = build_network(raw)

    radio = r.get(("radio",), {}, "dict")
    bad = sorted(set(radio) - set(RADIO_KEYS))
    if bad:
        raise ScenarioError(f"unknown radio key {bad[0]!r}", ("radio", bad[0]))
    radio_kw = {}
    for k in RADIO_KEYS:
        if k not in radio or radio[k] is None:
            continue
        if k == "rx_gain_linear" and isinstance(radio[k], list):
            radio_kw[k] = tuple(r.get(("radio", k), kind="vec"))
        else:
            radio_kw[k] = r.get(("radio", k))
    try:
        cfg = RadioConfig(**radio_kw)
        cfg.rx_gains(net.size)
    except ValueError as exc:
        raise ScenarioError(str(exc), ("radio",)) from None

    traj = _trajectory(r)
    obstacles = _obstacles(r)
    bias_raw = r.get(("bias",), {"kind": "none"}, "dict")
    bad = sorted(set(bias_raw) - set(BIAS_KEYS))
    if bad:
        raise ScenarioError(f"unknown bias key {bad[0]!r}", ("bias", bad[0]))
    kind = r.get(("bias", "kind"), "none", "str")
    params = {k: r.get(("bias", k)) for k in BIAS_KEYS[1:] if k in bias_raw}
    try:
        bias = NlosBiasModel(kind, **params)
    except ValueError as exc:
        raise ScenarioError(str(exc), ("bias",)) from None

    try:
        return Scenario(
            name=r.get(("name",), "scenario", "str"),
            net=net,
            trajectory=traj,
            cfg=cfg,
            obstacles=obstacles,
            bias=bias,
            trials_per_epoch=r.get(("trials_per_epoch",), 1, "int"),
            seed=r.get(("seed",), 0, "int"),
            speed_mps=r.get(("speed_mps",), 5.0),
            noise_scale=r.get(("noise_scale",), 1.0),
            init_altitude_m=r.get(("init_altitude_m",), 40.0),
            outlier_threshold_m=r.get(("outlier_threshold_m",), 200.0),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from None


def network_origin(raw: dict) -> tuple[float, float, float] | None:
    """Geodetic ENU origin: explicit ``origin`` or the centroid of geodetic sensors."""
    r = _Reader(raw)
    if "origin" in raw:
        return (r.get(("origin", "lat")), r.get(("origin", "lon")), r.get(("origin", "alt_m"), 0.0))
    pos = r.get(("sensors", "positions"), [], "list")
    geo = [p for p in pos if isinstance(p, dict) and "lat" in p]
    if not geo:
        return None
    vals = [(r.coerce(p["lat"], ("sensors",), "float"), r.coerce(p["lon"], ("sensors",), "float"),
             r.coerce(p.get("alt_m", 0.0), ("sensors",), "float")) for p in geo]
    n = len(vals)
    return tuple(sum(v[i] for v in vals) / n for i in range(3))


def build_network(raw: dict) -> SensorNetwork:
    r = _Reader(raw)
    pos = r.get(("sensors", "positions"), kind="list")
    origin = network_origin(raw)
    pts, names = [], []
    for i, p in enumerate(pos):
        path = ("sensors", "positions", i)
        if not isinstance(p, dict):
            raise ScenarioError("sensor entry must be a mapping", path)
        names.append(r.get(path + ("name",), f"S{i + 1}", "str"))
        if "lat" in p:
            enu = geodetic_to_enu(r.get(path + ("lat",)), r.get(path + ("lon",)), r.get(path + ("alt_m",), 0.0), origin)
            pts.append(tuple(float(v) for v in enu))
        else:
            pts.append((r.get(path + ("x",)), r.get(path + ("y",)), r.get(path + ("z",), 0.0)))
    try:
        return SensorNetwork(pts, r.get(("sensors", "reference_index"), 0, "int"), tuple(names))
    except ValueError as exc:
        raise ScenarioError(str(exc), ("sensors",)) from None


def _trajectory(r: _Reader) -> Trajectory:
    alt = r.get(("trajectory", "altitude_m"), None)
    wps = []
    for i, w in enumerate(r.get(("trajectory", "waypoints"), kind="list")):
        path = ("trajectory", "waypoints", i)
        if not isinstance(w, dict):
            raise ScenarioError("waypoint must be a mapping", path)
        z = r.get(path + ("z",), alt)
        if z is None:
            raise ScenarioError("waypoint needs z or trajectory.altitude_m", path)
        try:
            wps.append(
                Waypoint(
                    r.get(path + ("label",), chr(ord("A") + i) if i < 26 else f"W{i}", "str"),
                    (r.get(path + ("x",)), r.get(path + ("y",)), z),
                    r.get(path + ("hover_s",), 0.0),
                )
            )
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(str(exc), path) from None
    try:
        return Trajectory(tuple(wps), r.get(("trajectory", "sample_interval_s"), 1.0))
    except ValueError as exc:
        raise ScenarioError(str(exc), ("trajectory",)) from None


def _obstacles(r: _Reader) -> tuple:
    out = []
    for i, o in enumerate(r.get(("obstacles",), [], "list")):
        path = ("obstacles", i)
        if not isinstance(o, dict):
            raise ScenarioError("obstacle must be a mapping", path)
        kind = r.get(path + ("type",), kind="str")
        try:
            if kind == "box":
                out.append(Box(r.get(path + ("min",), kind="vec"), r.get(path + ("max",), kind="vec")))
            elif kind == "cylinder":
                out.append(
                    Cylinder(
                        tuple(r.get(path + ("center",), kind="vec")),
                        r.get(path + ("radius",)),
                        r.get(path + ("height",)),
                        r.get(path + ("base_z",), 0.0),
                    )
                )
            else:
                raise ScenarioError(f"unknown obstacle type {kind!r}", path + ("type",))
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(str(exc), path) from None
    return tuple(out)


def load_raw(text: str, source: str = "<scenario>") -> tuple[dict, Any]:
    try:
        raw = yaml.safe_load(text)
        tree = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                            line=mark.line + 1 if mark else None, source=source) from None
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a mapping", line=1, source=source)
    return raw, tree


def load_scenario(
    path_or_preset: str | Path,
    overrides: Sequence[str] = (),
    seed: int | None = None,
) -> tuple[Scenario, dict]:
    """Load, override and validate a scenario. Returns (scenario, effective raw mapping).

    Validation failures raise :class:`ScenarioError` naming the source line.
    """
    text, source = read_scenario_source(path_or_preset)
    return scenario_from_text(text, overrides, seed, source)


def scenario_from_text(text: str, overrides: Sequence[str] = (), seed: int | None = None, source: str = "<scenario>"):
    raw, tree = load_raw(text, source)
    try:
        raw = apply_overrides(raw, overrides)
        if seed is not None:
            raw["seed"] = seed
        return build_scenario(raw), raw
    except ScenarioError as exc:
        exc.source = source
        if exc.line is None and exc.path:
            exc.line = _line_of(tree, exc.path)
        raise exc from None
