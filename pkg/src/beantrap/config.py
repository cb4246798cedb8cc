"""YAML run configurations: strict parsing into layout / protocol / trap /
output objects.

All lengths in the file are micrometers, fields are gauss, currents are
amperes, and critical sheet densities are mA/um; the suffixes on the keys
(`width_um`, `b_y_t_G`, `k_c_mA_per_um`) make that explicit.  Parsing is
strict: unknown keys are rejected and every problem is reported with its full
key path (`protocol.stages[2].targets.b_G.q: unknown bias axis ...`) so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field as dc_field
from typing import Optional

import yaml

from .errors import ConfigError, FeasibilityError, ProtocolError
from .geometry import ChipLayout, Strip, build_layout, default_chip_layout
from .magnetics import GridSpec
from .protocol import (ControlProtocol, FieldCool, Hold, Ramp, SetNormal,
                       SolverOptions, SweepSpec, validate_protocol)
from .trap import TrapOptions, TrapParams, Window
from .units import GAUSS, UM

_TOP_KEYS = {"layout", "solver", "protocol", "trap", "outputs"}
_AXES = ("x", "y", "z")


@dataclass(frozen=True)
class FieldMapRequest:
    endpoint: int
    grid: GridSpec
    csv: str
    contours_uK: tuple = ()
    contours_csv: Optional[str] = None


@dataclass(frozen=True)
class OutputsSpec:
    trajectory_csv: Optional[str] = "trajectory.csv"
    manifest_json: str = "manifest.json"
    k_profiles_csv: Optional[str] = None
    field_maps: tuple = ()


@dataclass(frozen=True)
class RunConfig:
    layout: ChipLayout
    solver: SolverOptions
    protocol: ControlProtocol
    trap: TrapOptions
    outputs: OutputsSpec
    source: str = "<dict>"


class _Diag:
    """Collects (key path, message) pairs; raises once at the end so a bad
    file reports every problem in one pass."""

    def __init__(self):
        self.items: list = []

    def add(self, path: str, message: str) -> None:
        self.items.append((path, message))

    def raise_if_any(self) -> None:
        if self.items:
            raise ConfigError(self.items)


def _check_keys(node: dict, path: str, allowed, diag: _Diag) -> None:
    for key in node:
        if key not in allowed:
            diag.add(f"{path}.{key}" if path else str(key),
                     f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _as_mapping(node, path: str, diag: _Diag) -> dict:
    if node is None:
        return {}
    if not isinstance(node, dict):
        diag.add(path, f"expected a mapping, got {type(node).__name__}")
        return {}
    return node


def _num(node: dict, key: str, path: str, diag: _Diag, default=None,
         required: bool = False, minimum=None, integer: bool = False):
    if key not in node:
        if required:
            diag.add(f"{path}.{key}", "required key is missing")
        return default
    value = node[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        diag.add(f"{path}.{key}", f"expected a number, got {value!r}")
        return default
    if integer and int(value) != value:
        diag.add(f"{path}.{key}", f"expected an integer, got {value!r}")
        return default
    if minimum is not None and value < minimum:
        diag.add(f"{path}.{key}", f"must be >= {minimum}, got {value!r}")
        return default
    return int(value) if integer else float(value)


def _string(node: dict, key: str, path: str, diag: _Diag, default=None,
            required: bool = False):
    if key not in node:
        if required:
            diag.add(f"{path}.{key}", "required key is missing")
        return default
    value = node[key]
    if value is None and not required:
        return None
    if not isinstance(value, str):
        diag.add(f"{path}.{key}", f"expected a string, got {value!r}")
        return default
    return value


def _bool(node: dict, key: str, path: str, diag: _Diag, default):
    if key not in node:
        return default
    value = node[key]
    if not isinstance(value, bool):
        diag.add(f"{path}.{key}", f"expected true/false, got {value!r}")
        return default
    return value


# --------------------------------------------------------------------------
# Section parsers


def _parse_layout(node, diag: _Diag) -> ChipLayout:
    node = _as_mapping(node, "layout", diag)
    _check_keys(node, "layout", {"strips", "gap_um", "element_width_um"}, diag)
    element_width = _num(node, "element_width_um", "layout", diag,
                         default=3.0, minimum=1e-3)
    if "strips" in node and "gap_um" in node:
        diag.add("layout", "give either strips or gap_um, not both")
    if "strips" not in node:
        gap = _num(node, "gap_um", "layout", diag, default=100.0, minimum=0.0)
        try:
            return default_chip_layout(gap=gap * UM,
                                       element_width=element_width * UM)
        except ValueError as exc:
            diag.add("layout", str(exc))
            return default_chip_layout()
    items = node["strips"]
    if not isinstance(items, list) or not items:
        diag.add("layout.strips", "expected a non-empty list")
        return default_chip_layout()
    strips = []
    for i, raw in enumerate(items):
        path = f"layout.strips[{i}]"
        raw = _as_mapping(raw, path, diag)
        _check_keys(raw, path, {"name", "center_z_um", "width_um",
                                "k_c_mA_per_um", "carries_transport"}, diag)
        name = _string(raw, "name", path, diag, required=True)
        center = _num(raw, "center_z_um", path, diag, required=True)
        width = _num(raw, "width_um", path, diag, required=True, minimum=1e-3)
        k_c = _num(raw, "k_c_mA_per_um", path, diag, required=True,
                   minimum=1e-9)
        carries = _bool(raw, "carries_transport", path, diag, True)
        if None in (name, center, width, k_c):
            continue
        # mA/um == A/mm == 1e3 A/m
        strips.append(Strip(name=name, center_z=center * UM, width=width * UM,
                            k_c=k_c * 1.0e3, carries_transport=carries))
    if not strips:
        return default_chip_layout()
    try:
        return build_layout(strips, element_width=element_width * UM)
    except ValueError as exc:
        diag.add("layout.strips", str(exc))
        return default_chip_layout()


def _parse_solver(node, diag: _Diag) -> SolverOptions:
    node = _as_mapping(node, "solver", diag)
    _check_keys(node, "solver",
                {"substeps_per_ramp", "reference_length_m", "workers"}, diag)
    substeps = _num(node, "substeps_per_ramp", "solver", diag, default=40,
                    minimum=1, integer=True)
    ref = _num(node, "reference_length_m", "solver", diag, default=1.0,
               minimum=1e-12)
    workers = _num(node, "workers", "solver", diag, default=1, minimum=1,
                   integer=True)
    return SolverOptions(substeps_default=substeps, reference_length=ref,
                         workers=workers)


def _parse_stage(raw, path: str, diag: _Diag):
    raw = _as_mapping(raw, path, diag)
    kind = _string(raw, "kind", path, diag, required=True)
    if kind == "set_normal":
        _check_keys(raw, path, {"kind", "label"}, diag)
        return SetNormal(label=_string(raw, "label", path, diag,
                                       default="set_normal"))
    if kind == "field_cool":
        _check_keys(raw, path, {"kind", "label", "b_y_t_G", "b_x_G", "b_z_G"},
                    diag)
        return FieldCool(
            b_y_t=_num(raw, "b_y_t_G", path, diag, default=0.0) * GAUSS,
            b_x=_num(raw, "b_x_G", path, diag, default=0.0) * GAUSS,
            b_z=_num(raw, "b_z_G", path, diag, default=0.0) * GAUSS,
            label=_string(raw, "label", path, diag, default="field_cool"))
    if kind == "hold":
        _check_keys(raw, path, {"kind", "label"}, diag)
        return Hold(label=_string(raw, "label", path, diag, default="hold"))
    if kind == "ramp":
        _check_keys(raw, path, {"kind", "label", "substeps", "targets"}, diag)
        substeps = _num(raw, "substeps", path, diag, default=None, minimum=1,
                        integer=True)
        targets = _as_mapping(raw.get("targets"), f"{path}.targets", diag)
        _check_keys(targets, f"{path}.targets", {"i_A", "b_G"}, diag)
        i_targets = {}
        for name, amps in _as_mapping(targets.get("i_A"),
                                      f"{path}.targets.i_A", diag).items():
            if isinstance(amps, bool) or not isinstance(amps, (int, float)):
                diag.add(f"{path}.targets.i_A.{name}",
                         f"expected a number, got {amps!r}")
                continue
            i_targets[str(name)] = float(amps)
        b_targets = {}
        b_node = _as_mapping(targets.get("b_G"), f"{path}.targets.b_G", diag)
        for axis, gauss in b_node.items():
            if axis not in _AXES:
                diag.add(f"{path}.targets.b_G.{axis}",
                         "unknown bias axis (use x, y, z)")
                continue
            if isinstance(gauss, bool) or not isinstance(gauss, (int, float)):
                diag.add(f"{path}.targets.b_G.{axis}",
                         f"expected a number, got {gauss!r}")
                continue
            b_targets[axis] = float(gauss) * GAUSS
        return Ramp(i_targets=i_targets, b_targets=b_targets,
                    substeps=substeps,
                    label=_string(raw, "label", path, diag, default="ramp"))
    if kind is not None:
        diag.add(f"{path}.kind",
                 f"unknown stage kind {kind!r} "
                 "(use set_normal, field_cool, ramp, hold)")
    return None


def _parse_range(node, path: str, diag: _Diag, default=(0.0, 0.0)):
    node = _as_mapping(node, path, diag)
    _check_keys(node, path, {"start", "end"}, diag)
    start = _num(node, "start", path, diag, default=default[0])
    end = _num(node, "end", path, diag, default=default[1])
    return (start if start is not None else default[0],
            end if end is not None else default[1])


def _parse_protocol(node, layout: ChipLayout, diag: _Diag) -> ControlProtocol:
    node = _as_mapping(node, "protocol", diag)
    if not node:
        diag.add("protocol", "required section is missing")
        return ControlProtocol(layout=layout, stages=())
    _check_keys(node, "protocol", {"stages", "sweep"}, diag)
    raw_stages = node.get("stages")
    stages = []
    if not isinstance(raw_stages, list) or not raw_stages:
        diag.add("protocol.stages", "expected a non-empty list")
    else:
        for i, raw in enumerate(raw_stages):
            stage = _parse_stage(raw, f"protocol.stages[{i}]", diag)
            if stage is not None:
                stages.append(stage)
    sweep = None
    if "sweep" in node:
        s_node = _as_mapping(node["sweep"], "protocol.sweep", diag)
        _check_keys(s_node, "protocol.sweep",
                    {"count", "b_y_f_G", "b_z_f_G"}, diag)
        count = _num(s_node, "count", "protocol.sweep", diag, default=61,
                     minimum=1, integer=True)
        by = _parse_range(s_node.get("b_y_f_G"), "protocol.sweep.b_y_f_G",
                          diag)
        bz = _parse_range(s_node.get("b_z_f_G"), "protocol.sweep.b_z_f_G",
                          diag)
        sweep = SweepSpec(count=count,
                          b_y_start=by[0] * GAUSS, b_y_end=by[1] * GAUSS,
                          b_z_start=bz[0] * GAUSS, b_z_end=bz[1] * GAUSS)
    return ControlProtocol(layout=layout, stages=tuple(stages), sweep=sweep)


def _parse_trap(node, diag: _Diag) -> TrapOptions:
    node = _as_mapping(node, "trap", diag)
    _check_keys(node, "trap",
                {"window_um", "coarse_step_um", "merge_distance_um",
                 "merge_threshold_uK", "max_minima", "compute_saddles",
                 "g_factor_m_f"}, diag)
    win_node = _as_mapping(node.get("window_um"), "trap.window_um", diag)
    _check_keys(win_node, "trap.window_um",
                {"y_min", "y_max", "z_min", "z_max"}, diag)
    defaults = TrapOptions()
    y_min = _num(win_node, "y_min", "trap.window_um", diag,
                 default=defaults.window.y_min / UM)
    y_max = _num(win_node, "y_max", "trap.window_um", diag,
                 default=defaults.window.y_max / UM)
    z_min = _num(win_node, "z_min", "trap.window_um", diag,
                 default=defaults.window.z_min / UM)
    z_max = _num(win_node, "z_max", "trap.window_um", diag,
                 default=defaults.window.z_max / UM)
    if y_min is not None and y_min <= 0:
        diag.add("trap.window_um.y_min",
                 "must be above the film plane (y > 0)")
        y_min = defaults.window.y_min / UM
    window = Window(y_min * UM, y_max * UM, z_min * UM, z_max * UM)
    if window.y_max <= window.y_min or window.z_max <= window.z_min:
        diag.add("trap.window_um", "window is empty (max <= min)")
        window = defaults.window
    return TrapOptions(
        window=window,
        coarse_step=_num(node, "coarse_step_um", "trap", diag,
                         default=defaults.coarse_step / UM,
                         minimum=0.05) * UM,
        merge_distance=_num(node, "merge_distance_um", "trap", diag,
                            default=defaults.merge_distance / UM,
                            minimum=0.0) * UM,
        merge_threshold_uK=_num(node, "merge_threshold_uK", "trap", diag,
                                default=defaults.merge_threshold_uK,
                                minimum=0.0),
        max_minima=_num(node, "max_minima", "trap", diag,
                        default=defaults.max_minima, minimum=1, integer=True),
        compute_saddles=_bool(node, "compute_saddles", "trap", diag, True),
        params=TrapParams(g_factor_m_f=_num(node, "g_factor_m_f", "trap",
                                            diag, default=1.0)))


def _parse_grid(node, path: str, diag: _Diag) -> GridSpec:
    node = _as_mapping(node, path, diag)
    _check_keys(node, path, {"y_min", "y_max", "y_step",
                             "z_min", "z_max", "z_step"}, diag)
    values = {}
    for key, default in (("y_min", 2.0), ("y_max", 200.0), ("y_step", 2.0),
                         ("z_min", -200.0), ("z_max", 200.0), ("z_step", 2.0)):
        required = key not in ("y_step", "z_step")
        values[key] = _num(node, key, path, diag, default=default,
                           required=required)
    return GridSpec(y_min=values["y_min"] * UM, y_max=values["y_max"] * UM,
                    y_step=values["y_step"] * UM, z_min=values["z_min"] * UM,
                    z_max=values["z_max"] * UM, z_step=values["z_step"] * UM)


def _parse_outputs(node, sweep_count: int, diag: _Diag) -> OutputsSpec:
    node = _as_mapping(node, "outputs", diag)
    _check_keys(node, "outputs", {"trajectory_csv", "manifest_json",
                                  "k_profiles_csv", "field_maps"}, diag)
    maps = []
    raw_maps = node.get("field_maps", [])
    if raw_maps is None:
        raw_maps = []
    if not isinstance(raw_maps, list):
        diag.add("outputs.field_maps", "expected a list")
        raw_maps = []
    for i, raw in enumerate(raw_maps):
        path = f"outputs.field_maps[{i}]"
        raw = _as_mapping(raw, path, diag)
        _check_keys(raw, path, {"endpoint", "grid_um", "csv", "contours_uK",
                                "contours_csv"}, diag)
        endpoint = _num(raw, "endpoint", path, diag, default=0, minimum=0,
                        integer=True)
        if endpoint >= sweep_count:
            diag.add(f"{path}.endpoint",
                     f"endpoint {endpoint} out of range "
                     f"(sweep has {sweep_count})")
        grid = _parse_grid(raw.get("grid_um"), f"{path}.grid_um", diag)
        csv_name = _string(raw, "csv", path, diag, required=True)
        levels = raw.get("contours_uK", [])
        if levels is None:
            levels = []
        if not isinstance(levels, list) or any(
                isinstance(v, bool) or not isinstance(v, (int, float))
                for v in levels):
            diag.add(f"{path}.contours_uK", "expected a list of numbers")
            levels = []
        contours_csv = _string(raw, "contours_csv", path, diag)
        if levels and not contours_csv:
            diag.add(f"{path}.contours_csv",
                     "required when contours_uK is given")
        maps.append(FieldMapRequest(endpoint=endpoint, grid=grid,
                                    csv=csv_name or f"map_{i}.csv",
                                    contours_uK=tuple(float(v)
                                                      for v in levels),
                                    contours_csv=contours_csv))
    return OutputsSpec(
        trajectory_csv=_string(node, "trajectory_csv", "outputs", diag,
                               default="trajectory.csv"),
        manifest_json=_string(node, "manifest_json", "outputs", diag,
                              default="manifest.json") or "manifest.json",
        k_profiles_csv=_string(node, "k_profiles_csv", "outputs", diag,
                               default=None),
        field_maps=tuple(maps))


def parse_config(data: dict, source: str = "<dict>") -> RunConfig:
    diag = _Diag()
    if not isinstance(data, dict):
        diag.add("<root>", "configuration must be a mapping")
        diag.raise_if_any()
    _check_keys(data, "", _TOP_KEYS, diag)
    layout = _parse_layout(data.get("layout"), diag)
    solver = _parse_solver(data.get("solver"), diag)
    protocol = _parse_protocol(data.get("protocol"), layout, diag)
    trap = _parse_trap(data.get("trap"), diag)
    sweep_count = protocol.sweep.count if protocol.sweep is not None else 1
    outputs = _parse_outputs(data.get("outputs"), sweep_count, diag)
    if not diag.items and protocol.stages:
        try:
            validate_protocol(protocol)
        except (ProtocolError, FeasibilityError) as exc:
            diag.add("protocol", str(exc))
    diag.raise_if_any()
    return RunConfig(layout=layout, solver=solver, protocol=protocol,
                     trap=trap, outputs=outputs, source=source)


def load_config(path) -> RunConfig:
    with open(path, "r") as fh:
        data = yaml.safe_load(fh)
    return parse_config(data, source=str(path))


def shipped_config_names() -> list:
    root = importlib.resources.files("beantrap") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir()
                  if p.name.endswith(".yaml"))


def shipped_config_path(name: str):
    """Resolve a bundled configuration by bare name (`trajectory1`)."""
    root = importlib.resources.files("beantrap") / "configs"
    candidate = root / f"{name}.yaml"
    if not candidate.is_file():
        raise ConfigError([("config", f"no shipped configuration {name!r} "
                            f"(have: {', '.join(shipped_config_names())})")])
    return candidate
