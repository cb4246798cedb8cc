"""Experimental sequencing: cool-downs, current/field ramps, and bias sweeps.

A protocol is an ordered list of stages applied to one chip layout:

    set_normal   quench the film; every persistent current dies
    field_cool   go superconducting in the ambient bias, carrying no current
    ramp         move wire currents and bias fields linearly in `substeps`
                 history steps (each one a constrained screening update)
    hold         bookkeeping marker; the state is rate independent

The film is hysteretic, so the state after a stage depends on the entire
sequence since the last field_cool, not just on the present drive values.
Cooling a film that is already superconducting is rejected: a re-cool only
makes sense after an explicit set_normal.

A sweep branches the protocol at its final ramp.  The shared prefix is run
once; each endpoint then continues from a copy of the frozen prefix state
toward its own (B_y, B_z) target.  This reproduces running the full sequence
per endpoint exactly (same steps, same arithmetic) at a fraction of the cost.
Endpoints are independent, so they can be distributed over worker processes;
results are identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .bean import (CriticalState, InductanceOperator, StepInput,
                   build_inductance, external_potential, field_cool,
                   normal_state, step_detailed, transition_to_normal)
from .errors import FeasibilityError, ProtocolError, SolverError
from .geometry import ChipLayout
from .magnetics import BiasField
from .trap import TrapOptions, TrapScan, analyze_trap
from .units import GAUSS, UM

_AXES = "xyz"


@dataclass(frozen=True)
class SetNormal:
    label: str = "set_normal"


@dataclass(frozen=True)
class FieldCool:
    """Cool through the transition in bias (b_x, b_y_t, b_z); only the
    perpendicular component b_y_t enters the screening problem."""

    b_y_t: float = 0.0
    b_x: float = 0.0
    b_z: float = 0.0
    label: str = "field_cool"


@dataclass(frozen=True)
class Ramp:
    """Linear move of named wire currents (A) and bias components (T).

    Omitted strips/axes hold their previous values.  `substeps` controls only
    the numerical path resolution; the end state is rate independent and (for
    monotone drives) nearly substep independent.
    """

    i_targets: Mapping[str, float] = field(default_factory=dict)
    b_targets: Mapping[str, float] = field(default_factory=dict)
    substeps: Optional[int] = None
    label: str = "ramp"


@dataclass(frozen=True)
class Hold:
    label: str = "hold"


@dataclass(frozen=True)
class SweepSpec:
    """Endpoint family for the final ramp: `count` linearly spaced
    (b_y_f, b_z_f) targets in tesla."""

    count: int = 61
    b_y_start: float = 0.0
    b_y_end: float = 0.0
    b_z_start: float = 0.0
    b_z_end: float = 0.0

    def endpoints(self) -> list[tuple[float, float]]:
        by = np.linspace(self.b_y_start, self.b_y_end, self.count)
        bz = np.linspace(self.b_z_start, self.b_z_end, self.count)
        return list(zip(by.tolist(), bz.tolist()))


@dataclass(frozen=True)
class SolverOptions:
    substeps_default: int = 40
    reference_length: float = 1.0
    workers: int = 1


@dataclass(frozen=True)
class ControlProtocol:
    layout: ChipLayout
    stages: tuple
    sweep: Optional[SweepSpec] = None

    def validate(self) -> None:
        validate_protocol(self)


@dataclass
class Drive:
    """Currently applied per-strip currents (A) and bias vector (T)."""

    i: np.ndarray
    bias: np.ndarray

    def bias_field(self) -> BiasField:
        return BiasField(*self.bias)

    def copy(self) -> "Drive":
        return Drive(self.i.copy(), self.bias.copy())


@dataclass
class StepSummary:
    stage_index: int
    stage_label: str
    substep: int
    i_wire: tuple
    b_y: float
    kkt_residual: float
    transport_residual: float
    k_over_kc: float
    n_clamped: int


@dataclass
class EndpointResult:
    index: int
    b_y_f: float
    b_z_f: float
    state: Optional[CriticalState]
    drive: Optional[Drive]
    records: list
    scan: Optional[TrapScan] = None
    error: Optional[str] = None
    aborted_at: Optional[tuple] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class RunResult:
    layout: ChipLayout
    sweep: Optional[SweepSpec]
    endpoints: list
    prefix_records: list
    options: SolverOptions

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.endpoints)

    def aborted(self) -> list:
        return [e for e in self.endpoints if not e.ok]

    def residual_summary(self) -> dict:
        records = list(self.prefix_records)
        for e in self.endpoints:
            records.extend(e.records)
        if not records:
            return {"steps": 0, "max_kkt_residual": 0.0,
                    "max_transport_residual_A": 0.0, "max_k_over_kc": 0.0}
        return {
            "steps": len(records),
            "max_kkt_residual": max(r.kkt_residual for r in records),
            "max_transport_residual_A": max(r.transport_residual
                                            for r in records),
            "max_k_over_kc": max(r.k_over_kc for r in records),
        }


def validate_protocol(protocol: ControlProtocol) -> None:
    """Static checks: stage wiring, strip names, transport feasibility.

    Raises ProtocolError for sequencing problems and FeasibilityError when a
    ramp asks for more current than K_C * width allows.
    """
    layout = protocol.layout
    if not protocol.stages:
        raise ProtocolError("protocol has no stages")

    superconducting = False
    cooled_once = False
    n_ramps = 0
    for idx, stage in enumerate(protocol.stages):
        where = f"stage {idx} ({getattr(stage, 'label', type(stage).__name__)})"
        if isinstance(stage, SetNormal):
            superconducting = False
        elif isinstance(stage, FieldCool):
            if superconducting:
                raise ProtocolError(
                    f"{where}: film is already superconducting; re-cooling "
                    "requires a set_normal stage first")
            superconducting = True
            cooled_once = True
        elif isinstance(stage, Hold):
            pass
        elif isinstance(stage, Ramp):
            n_ramps += 1
            if stage.substeps is not None and stage.substeps < 1:
                raise ProtocolError(f"{where}: substeps must be >= 1")
            for axis in stage.b_targets:
                if axis not in _AXES:
                    raise ProtocolError(
                        f"{where}: unknown bias axis {axis!r} (use x, y, z)")
            for name, amps in stage.i_targets.items():
                try:
                    s = layout.strip_by_name(name)
                except Exception:
                    raise ProtocolError(
                        f"{where}: no strip named {name!r} in the layout "
                        f"(have {', '.join(layout.strip_names())})") from None
                limit = layout.strips[s].critical_current
                if abs(amps) > limit * (1.0 + 1e-12):
                    raise FeasibilityError(
                        f"{where}: target {amps:.6g} A on strip {name!r} "
                        f"exceeds its critical current {limit:.6g} A "
                        "(K_C * width)")
                if not superconducting and amps != 0.0:
                    raise ProtocolError(
                        f"{where}: transport ramp while the film is normal; "
                        "add a field_cool first")
        else:
            raise ProtocolError(f"{where}: unknown stage type "
                                f"{type(stage).__name__}")
    if protocol.sweep is not None:
        if n_ramps == 0:
            raise ProtocolError("a sweep needs at least one ramp to branch on")
        if protocol.sweep.count < 1:
            raise ProtocolError("sweep count must be >= 1")
    if not cooled_once and protocol.sweep is not None:
        raise ProtocolError("swept protocols must field-cool the film")


def _run_stages(layout: ChipLayout, op: InductanceOperator,
                state: CriticalState, drive: Drive, stages: Sequence,
                substeps_default: int, records: list, progress: list,
                stage_offset: int = 0) -> CriticalState:
    for si, stage in enumerate(stages):
        stage_index = stage_offset + si
        progress[0] = stage_index
        progress[1] = -1
        if isinstance(stage, SetNormal):
            state = transition_to_normal(state)
            drive.i = np.zeros_like(drive.i)
        elif isinstance(stage, FieldCool):
            if state.superconducting:
                raise ProtocolError("film is already superconducting; "
                                    "re-cooling requires set_normal first")
            drive.bias = np.array([stage.b_x, stage.b_y_t, stage.b_z])
            state = field_cool(layout, b_y_at_cooling=stage.b_y_t)
        elif isinstance(stage, Hold):
            pass
        elif isinstance(stage, Ramp):
            i1 = drive.i.copy()
            for name, amps in stage.i_targets.items():
                i1[layout.strip_by_name(name)] = amps
            b1 = drive.bias.copy()
            for axis, tesla in stage.b_targets.items():
                b1[_AXES.index(axis)] = tesla
            if not state.superconducting:
                if np.any(i1 != 0.0):
                    raise FeasibilityError(
                        "transport ramp while the film is normal")
                drive.i, drive.bias = i1, b1   # ambient move, nothing screens
                continue
            n = substeps_default if stage.substeps is None else stage.substeps
            i0, b0 = drive.i.copy(), drive.bias.copy()
            b_y_prev = b0[1]
            for s in range(1, n + 1):
                progress[1] = s
                f = s / n
                i_now = i0 + f * (i1 - i0)
                b_y_now = b0[1] + f * (b1[1] - b0[1])
                inp = StepInput(
                    delta_a_ext=external_potential(layout, b_y_now - b_y_prev),
                    i_target=i_now)
                state, rep = step_detailed(state, inp, op)
                b_y_prev = b_y_now
                records.append(StepSummary(
                    stage_index=stage_index, stage_label=stage.label,
                    substep=s, i_wire=tuple(i_now.tolist()), b_y=b_y_now,
                    kkt_residual=rep.kkt_residual,
                    transport_residual=rep.transport_residual,
                    k_over_kc=rep.k_over_kc, n_clamped=rep.n_clamped))
            drive.i, drive.bias = i1, b1
        else:
            raise ProtocolError(f"unknown stage type {type(stage).__name__}")
    return state


def _override_sweep_ramp(stages: tuple, b_y_f: float, b_z_f: float) -> tuple:
    """Return `stages` with the first ramp's y/z bias targets replaced."""
    out = list(stages)
    for idx, stage in enumerate(out):
        if isinstance(stage, Ramp):
            targets = dict(stage.b_targets)
            targets["y"] = b_y_f
            targets["z"] = b_z_f
            out[idx] = replace(stage, b_targets=targets)
            return tuple(out)
    raise ProtocolError("sweep tail contains no ramp")


def _endpoint_task(payload: dict) -> EndpointResult:
    layout = payload["layout"]
    op = payload["op"]
    state = payload["state"].copy()
    drive = payload["drive"].copy()
    tail = _override_sweep_ramp(payload["tail"], payload["b_y_f"],
                                payload["b_z_f"])
    records: list = []
    progress = [payload["stage_offset"], -1]
    try:
        state = _run_stages(layout, op, state, drive, tail,
                            payload["substeps_default"], records, progress,
                            stage_offset=payload["stage_offset"])
        scan = None
        if payload["trap_options"] is not None:
            scan = analyze_trap(layout, state, drive.bias_field(),
                                payload["trap_options"])
        return EndpointResult(index=payload["index"],
                              b_y_f=payload["b_y_f"], b_z_f=payload["b_z_f"],
                              state=state, drive=drive, records=records,
                              scan=scan)
    except (SolverError, FeasibilityError, ProtocolError) as exc:
        return EndpointResult(index=payload["index"],
                              b_y_f=payload["b_y_f"], b_z_f=payload["b_z_f"],
                              state=None, drive=None, records=records,
                              scan=None, error=str(exc),
                              aborted_at=(progress[0], progress[1]))


def run(protocol: ControlProtocol, options: SolverOptions = SolverOptions(),
        trap_options: Optional[TrapOptions] = None,
        op: Optional[InductanceOperator] = None,
        only_endpoints: Optional[set] = None) -> RunResult:
    """Execute the protocol; with a sweep, branch the final ramp over its
    endpoints (optionally across worker processes).  `only_endpoints`
    restricts a swept run to the named endpoint indices (e.g. to recompute a
    single field map without the rest of the sweep)."""
    validate_protocol(protocol)
    layout = protocol.layout
    if op is None:
        op = build_inductance(layout, options.reference_length)

    stages = tuple(protocol.stages)
    if protocol.sweep is None:
        state = normal_state(layout)
        drive = Drive(np.zeros(layout.n_strips), np.zeros(3))
        records: list = []
        progress = [0, -1]
        try:
            state = _run_stages(layout, op, state, drive, stages,
                                options.substeps_default, records, progress)
            scan = None
            if trap_options is not None:
                scan = analyze_trap(layout, state, drive.bias_field(),
                                    trap_options)
            endpoint = EndpointResult(index=0, b_y_f=drive.bias[1],
                                      b_z_f=drive.bias[2], state=state,
                                      drive=drive, records=records, scan=scan)
        except (SolverError, FeasibilityError, ProtocolError) as exc:
            endpoint = EndpointResult(index=0, b_y_f=np.nan, b_z_f=np.nan,
                                      state=None, drive=None, records=records,
                                      error=str(exc),
                                      aborted_at=(progress[0], progress[1]))
        return RunResult(layout=layout, sweep=None, endpoints=[endpoint],
                         prefix_records=[], options=options)

    # --- swept run: shared prefix once, then branch the last ramp ---------
    ramp_positions = [i for i, s in enumerate(stages) if isinstance(s, Ramp)]
    split = ramp_positions[-1]
    prefix, tail = stages[:split], stages[split:]

    state = normal_state(layout)
    drive = Drive(np.zeros(layout.n_strips), np.zeros(3))
    prefix_records: list = []
    progress = [0, -1]
    state = _run_stages(layout, op, state, drive, prefix,
                        options.substeps_default, prefix_records, progress)

    payloads = []
    for e, (b_y_f, b_z_f) in enumerate(protocol.sweep.endpoints()):
        if only_endpoints is not None and e not in only_endpoints:
            continue
        payloads.append({
            "layout": layout, "op": op, "state": state, "drive": drive,
            "tail": tail, "index": e, "b_y_f": b_y_f, "b_z_f": b_z_f,
            "substeps_default": options.substeps_default,
            "trap_options": trap_options, "stage_offset": split,
        })

    if options.workers > 1:
        with ProcessPoolExecutor(max_workers=options.workers) as pool:
            endpoints = list(pool.map(_endpoint_task, payloads))
    else:
        endpoints = [_endpoint_task(p) for p in payloads]
    endpoints.sort(key=lambda r: r.index)
    return RunResult(layout=layout, sweep=protocol.sweep, endpoints=endpoints,
                     prefix_records=prefix_records, options=options)


# --------------------------------------------------------------------------
# Well tracking and the trajectory table


def track_wells(result: RunResult, max_jump: float = 30.0e-6) -> list:
    """Assign stable well ids across sweep endpoints by nearest-neighbor
    matching; a well that moves more than `max_jump` between endpoints (or
    appears fresh) gets a new id.  Returns, per endpoint, a list of
    (well_id, minimum_index) pairs; aborted endpoints yield None."""
    assignments: list = []
    previous: list = []     # (well_id, Minimum) from the last good endpoint
    next_id = 0
    for ep in result.endpoints:
        if not ep.ok or ep.scan is None:
            assignments.append(None)
            continue
        minima = ep.scan.minima
        candidates = []
        for pi, (wid, pm) in enumerate(previous):
            for ci, m in enumerate(minima):
                d = float(np.hypot(m.y - pm.y, m.z - pm.z))
                if d <= max_jump:
                    candidates.append((d, pi, ci))
        candidates.sort(key=lambda t: t[0])
        used_prev: set = set()
        assigned: dict = {}
        for d, pi, ci in candidates:
            if pi in used_prev or ci in assigned:
                continue
            assigned[ci] = previous[pi][0]
            used_prev.add(pi)
        pairs = []
        for ci in range(len(minima)):
            if ci not in assigned:
                assigned[ci] = next_id
                next_id += 1
            pairs.append((assigned[ci], ci))
        assignments.append(pairs)
        previous = [(wid, minima[ci]) for wid, ci in pairs]
    return assignments


def trajectory_rows(result: RunResult, max_jump: float = 30.0e-6) -> list:
    """Flat per-well rows for CSV export, ordered by endpoint then well id."""
    rows = []
    for ep, pairs in zip(result.endpoints, track_wells(result, max_jump)):
        if pairs is None:
            rows.append({"endpoint": ep.index,
                         "b_y_f_G": ep.b_y_f / GAUSS,
                         "b_z_f_G": ep.b_z_f / GAUSS,
                         "well": -1, "y_um": "", "z_um": "", "u_uK": "",
                         "merged": "", "unbounded": "",
                         "error": ep.error or "aborted"})
            continue
        merged_indices: set = set()
        for s in ep.scan.saddles:
            if s.merged:
                merged_indices.update(s.pair)
        for wid, ci in sorted(pairs):
            m = ep.scan.minima[ci]
            rows.append({"endpoint": ep.index,
                         "b_y_f_G": ep.b_y_f / GAUSS,
                         "b_z_f_G": ep.b_z_f / GAUSS,
                         "well": wid,
                         "y_um": m.y / UM, "z_um": m.z / UM,
                         "u_uK": m.u_uK,
                         "merged": int(ci in merged_indices),
                         "unbounded": int(m.unbounded),
                         "error": ""})
    return rows


def write_trajectory_csv(path, result: RunResult,
                         max_jump: float = 30.0e-6) -> None:
    import csv

    fields = ["endpoint", "b_y_f_G", "b_z_f_G", "well", "y_um", "z_um",
              "u_uK", "merged", "unbounded", "error"]
    with open(path, "w", newline="") as fh:
        fh.write(f"# trap minima per sweep endpoint; layout "
                 f"{result.layout.layout_hash()}\n")
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in trajectory_rows(result, max_jump):
            out = dict(row)
            for key in ("b_y_f_G", "b_z_f_G"):
                out[key] = f"{row[key]:.6f}"
            for key in ("y_um", "z_um", "u_uK"):
                if row[key] != "":
                    out[key] = f"{row[key]:.6f}"
            writer.writerow(out)
