"""Protocol execution: stage sequencing, sweep branching, determinism across
worker counts, and the well-tracking / trajectory-table layer."""

from dataclasses import replace

import numpy as np
import pytest

from beantrap.errors import FeasibilityError, ProtocolError
from beantrap.geometry import default_chip_layout
from beantrap.protocol import (ControlProtocol, Drive, EndpointResult,
                               FieldCool, Hold, Ramp, RunResult, SetNormal,
                               SolverOptions, SweepSpec, run, track_wells,
                               trajectory_rows, validate_protocol,
                               write_trajectory_csv)
from beantrap.trap import Minimum, Saddle, TrapOptions, TrapScan, Window
from beantrap.units import GAUSS, UM

LAYOUT = default_chip_layout()


def swept_protocol(count=3):
    """Cool, load the transport wire, then approach; the sweep branches the
    final ramp over (b_y_f, b_z_f) endpoints."""
    stages = (
        FieldCool(b_y_t=0.0, label="cool"),
        Ramp(i_targets={"Z": -1.0}, b_targets={"z": 9.4 * GAUSS},
             substeps=6, label="load"),
        Ramp(b_targets={"y": 3.0 * GAUSS, "z": 2.0 * GAUSS},
             substeps=6, label="approach"),
    )
    sweep = SweepSpec(count=count, b_y_start=0.0, b_y_end=8.0 * GAUSS,
                      b_z_start=9.4 * GAUSS, b_z_end=4.0 * GAUSS)
    return ControlProtocol(layout=LAYOUT, stages=stages, sweep=sweep)


def test_sweep_endpoint_spacing():
    sweep = SweepSpec(count=5, b_y_start=0.0, b_y_end=8.0 * GAUSS,
                      b_z_start=9.4 * GAUSS, b_z_end=0.0)
    points = sweep.endpoints()
    assert len(points) == 5
    assert points[0] == (0.0, 9.4 * GAUSS)
    assert points[-1][0] == pytest.approx(8.0 * GAUSS)
    assert points[-1][1] == pytest.approx(0.0)
    assert points[2][0] == pytest.approx(4.0 * GAUSS)
    assert points[2][1] == pytest.approx(4.7 * GAUSS)


def test_validation_catches_bad_protocols():
    cool = FieldCool()
    cases = [
        ((), ProtocolError, "no stages"),
        ((cool, FieldCool()), ProtocolError, "set_normal"),
        ((cool, Ramp(i_targets={"Q": 0.5})), ProtocolError, "no strip named"),
        ((cool, Ramp(b_targets={"q": 1e-4})), ProtocolError, "bias axis"),
        ((cool, Ramp(i_targets={"Z": 0.5}, substeps=0)), ProtocolError,
         "substeps"),
        ((cool, Ramp(i_targets={"Z": 2.0})), FeasibilityError, "1.8"),
        ((Ramp(i_targets={"Z": 0.5}),), ProtocolError, "field_cool"),
    ]
    for stages, exc_type, fragment in cases:
        protocol = ControlProtocol(layout=LAYOUT, stages=stages)
        with pytest.raises(exc_type, match=fragment):
            validate_protocol(protocol)

    with pytest.raises(ProtocolError, match="at least one ramp"):
        validate_protocol(ControlProtocol(
            layout=LAYOUT, stages=(cool,), sweep=SweepSpec(count=3)))
    with pytest.raises(ProtocolError, match="sweep count"):
        validate_protocol(ControlProtocol(
            layout=LAYOUT,
            stages=(cool, Ramp(b_targets={"y": 1e-4})),
            sweep=SweepSpec(count=0)))
    with pytest.raises(ProtocolError, match="field-cool"):
        validate_protocol(ControlProtocol(
            layout=LAYOUT, stages=(Ramp(b_targets={"y": 1e-4}),),
            sweep=SweepSpec(count=2)))
    # run() validates before touching the solver
    with pytest.raises(ProtocolError, match="no stages"):
        run(ControlProtocol(layout=LAYOUT, stages=()))


def test_sweep_branches_match_standalone_runs():
    """Every sweep endpoint must be bit-identical to running the whole
    protocol from scratch with the final ramp retargeted by hand — the
    shared-prefix optimization is not allowed to change a single bit."""
    protocol = swept_protocol(count=3)
    swept = run(protocol, SolverOptions())
    assert swept.ok and len(swept.endpoints) == 3

    for ep, (b_y_f, b_z_f) in zip(swept.endpoints,
                                  protocol.sweep.endpoints()):
        stages = list(protocol.stages)
        final = stages[-1]
        stages[-1] = replace(final, b_targets={"y": b_y_f, "z": b_z_f})
        alone = run(ControlProtocol(layout=LAYOUT, stages=tuple(stages)),
                    SolverOptions())
        ref = alone.endpoints[0]
        assert np.array_equal(ep.state.k, ref.state.k)
        assert np.array_equal(ep.state.i_wire, ref.state.i_wire)
        assert np.array_equal(ep.drive.bias, ref.drive.bias)
        assert np.array_equal(ep.drive.i, ref.drive.i)


def test_worker_count_does_not_change_results(tmp_path):
    protocol = swept_protocol(count=2)
    trap = TrapOptions(window=Window(50.0 * UM, 350.0 * UM,
                                     -150.0 * UM, 150.0 * UM),
                       coarse_step=4.0 * UM)
    serial = run(protocol, SolverOptions(workers=1), trap_options=trap)
    pooled = run(protocol, SolverOptions(workers=2), trap_options=trap)
    assert serial.ok and pooled.ok
    for a, b in zip(serial.endpoints, pooled.endpoints):
        assert a.index == b.index
        assert np.array_equal(a.state.k, b.state.k)
    path_a = tmp_path / "serial.csv"
    path_b = tmp_path / "pooled.csv"
    write_trajectory_csv(path_a, serial)
    write_trajectory_csv(path_b, pooled)
    assert path_a.read_bytes() == path_b.read_bytes()


def test_only_endpoints_subset():
    protocol = swept_protocol(count=3)
    full = run(protocol, SolverOptions())
    partial = run(protocol, SolverOptions(), only_endpoints={2})
    assert [ep.index for ep in partial.endpoints] == [2]
    assert np.array_equal(partial.endpoints[0].state.k,
                          full.endpoints[2].state.k)


def test_cooling_field_changes_the_frozen_state():
    # Screening responds to perpendicular-field *changes* relative to the
    # frozen cool-down value, so two cool fields followed by a ramp to the
    # same absolute b_y leave different persistent currents behind.
    def final_k(b_cool_gauss):
        stages = (FieldCool(b_y_t=b_cool_gauss * GAUSS),
                  Ramp(i_targets={"Z": -1.0},
                       b_targets={"y": 6.0 * GAUSS, "z": 9.4 * GAUSS},
                       substeps=8))
        result = run(ControlProtocol(layout=LAYOUT, stages=stages))
        return result.endpoints[0].state.k

    assert not np.allclose(final_k(-3.0), final_k(0.0),
                           atol=1e-6 * LAYOUT.k_c.max())


def test_set_normal_erases_screening_currents():
    stages = (
        FieldCool(),
        Ramp(b_targets={"y": 5.0 * GAUSS}, substeps=6),
        SetNormal(),
        Ramp(b_targets={"y": 1.0 * GAUSS}, substeps=6, label="ambient"),
        FieldCool(b_y_t=1.0 * GAUSS, label="recool"),
    )
    result = run(ControlProtocol(layout=LAYOUT, stages=stages))
    ep = result.endpoints[0]
    assert ep.ok
    assert np.all(ep.state.k == 0.0)        # freshly cooled, no drive since
    assert np.all(ep.drive.i == 0.0)
    assert ep.drive.bias[1] == pytest.approx(1.0 * GAUSS)
    # the ambient move happens while nothing screens: no solver records
    labels = {r.stage_label for r in ep.records}
    assert "ambient" not in labels


def test_hold_is_a_no_op():
    base = (FieldCool(), Ramp(b_targets={"y": 4.0 * GAUSS}, substeps=5))
    held = (base[0], Hold(), base[1], Hold())
    k_base = run(ControlProtocol(layout=LAYOUT, stages=base))
    k_held = run(ControlProtocol(layout=LAYOUT, stages=held))
    assert np.array_equal(k_base.endpoints[0].state.k,
                          k_held.endpoints[0].state.k)


def test_residual_summary_counts_prefix_and_branches():
    result = run(swept_protocol(count=2), SolverOptions())
    summary = result.residual_summary()
    # prefix: the 6-substep load ramp; each branch: the 6-substep approach
    assert len(result.prefix_records) == 6
    assert summary["steps"] == 6 + 2 * 6
    assert summary["max_kkt_residual"] <= 1e-8
    assert summary["max_transport_residual_A"] <= 1e-9
    assert 0.0 < summary["max_k_over_kc"] <= 1.0 + 1e-9

    empty = RunResult(layout=LAYOUT, sweep=None, endpoints=[],
                      prefix_records=[], options=SolverOptions())
    assert empty.residual_summary()["steps"] == 0


# ---------------------------------------------------------------------------
# Well tracking on handcrafted endpoint results


def scan_of(*minima, saddles=()):
    return TrapScan(minima=list(minima), saddles=list(saddles))


def endpoint(index, b_y_G, scan=None, error=None):
    return EndpointResult(
        index=index, b_y_f=b_y_G * GAUSS, b_z_f=0.0, state=None,
        drive=Drive(np.zeros(2), np.array([0.0, b_y_G * GAUSS, 0.0])),
        records=[], scan=scan, error=error,
        aborted_at=(1, 2) if error else None)


def handcrafted_result():
    m = lambda y, z, u, **kw: Minimum(y=y * UM, z=z * UM, u_uK=u, **kw)
    eps = [
        endpoint(0, 0.0, scan_of(m(100.0, 0.0, 5.0))),
        endpoint(1, 1.0, scan_of(m(95.0, 2.0, 4.0))),
        endpoint(2, 2.0, scan_of(m(200.0, 100.0, 3.0))),
        endpoint(3, 3.0, error="solver exploded"),
        endpoint(4, 4.0, scan_of(m(205.0, 100.0, 2.5),
                                 m(100.0, 0.0, 6.0, unbounded=True),
                                 saddles=[Saddle(pair=(0, 1),
                                                 u_saddle_uK=2.9,
                                                 merged=True)])),
    ]
    return RunResult(layout=LAYOUT, sweep=None, endpoints=eps,
                     prefix_records=[], options=SolverOptions())


def test_track_wells_identity_jump_and_abort():
    ids = track_wells(handcrafted_result())
    assert ids[0] == [(0, 0)]
    assert ids[1] == [(0, 0)]          # 5.4 um drift: same well
    assert ids[2] == [(1, 0)]          # >30 um jump: new id
    assert ids[3] is None              # aborted endpoint
    # tracking survives the aborted endpoint: matched against endpoint 2
    assert ids[4] == [(1, 0), (2, 1)]


def test_trajectory_rows_flags_and_order():
    rows = trajectory_rows(handcrafted_result())
    assert len(rows) == 6              # 4 tracked wells + abort + extra well
    aborted = [r for r in rows if r["endpoint"] == 3]
    assert aborted == [{"endpoint": 3, "b_y_f_G": pytest.approx(3.0),
                        "b_z_f_G": 0.0, "well": -1, "y_um": "", "z_um": "",
                        "u_uK": "", "merged": "", "unbounded": "",
                        "error": "solver exploded"}]
    last = [r for r in rows if r["endpoint"] == 4]
    assert [r["well"] for r in last] == [1, 2]   # ordered by well id
    assert all(r["merged"] == 1 for r in last)   # saddle pair (0, 1) merged
    assert last[1]["unbounded"] == 1


def test_trajectory_csv_format(tmp_path):
    path = tmp_path / "trajectory.csv"
    result = handcrafted_result()
    write_trajectory_csv(path, result)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# trap minima per sweep endpoint")
    assert LAYOUT.layout_hash() in lines[0]
    assert lines[1] == ("endpoint,b_y_f_G,b_z_f_G,well,y_um,z_um,u_uK,"
                        "merged,unbounded,error")
    assert len(lines) == 2 + len(trajectory_rows(result))
    well_row = lines[2].split(",")
    assert well_row[1] == "0.000000"   # bias formatted to fixed precision
    assert well_row[4] == "100.000000"
