"""Trap analysis: Zeeman scaling, minimum finding against a closed-form side
guide, flood-fill saddles on synthetic landscapes, and contour extraction."""

import numpy as np
import pytest
from scipy.optimize import brentq

from beantrap.bean import CriticalState
from beantrap.geometry import default_chip_layout
from beantrap.magnetics import BiasField
from beantrap.trap import (Minimum, TrapOptions, TrapParams, TrapScan, Window,
                           analyze_trap, equipotential_contours, find_minima,
                           find_saddle, potential_at, potential_grid,
                           potential_uK, write_contours_csv)
from beantrap.units import GAUSS, MU0, UM

UK_PER_G = 67.17


def uniform_z_state(layout, current):
    """Current spread evenly over the narrow transport wire, nothing on the
    wide one: the simplest current pattern with a closed-form guide field."""
    k = np.zeros(layout.n_elements)
    z_idx = layout.strip_by_name("Z")
    width = layout.strips[z_idx].width
    k[layout.strip_slice(z_idx)] = current / width
    i_wire = np.zeros(len(layout.strips))
    i_wire[z_idx] = current
    return CriticalState(k, np.zeros(layout.n_elements), i_wire)


def guide_height(layout, current, b_z_bias):
    """Height above the wire center where the ribbon's B_z cancels the bias.

    Over the center line of a uniformly loaded ribbon of width w,
    B_z(y) = (mu0 k / pi) * arctan(w / (2 y)); B_y vanishes by symmetry, so
    |B| has its minimum where B_z crosses zero.
    """
    z_idx = layout.strip_by_name("Z")
    w = layout.strips[z_idx].width
    pref = MU0 * (current / w) / (2.0 * np.pi)
    f = lambda y: b_z_bias + 2.0 * pref * np.arctan(0.5 * w / y)
    return brentq(f, 1.0 * UM, 5.0e-3, xtol=1e-12)


def test_zeeman_scale():
    params = TrapParams()
    assert params.uK_per_gauss == pytest.approx(UK_PER_G, rel=2e-4)
    assert params.uK_per_tesla == pytest.approx(UK_PER_G / GAUSS, rel=2e-4)
    # the g_F * m_F factor is a straight multiplier
    assert TrapParams(g_factor_m_f=0.5).uK_per_gauss == pytest.approx(
        0.5 * params.uK_per_gauss)
    assert potential_uK(2.0 * GAUSS) == pytest.approx(2.0 * UK_PER_G,
                                                      rel=2e-4)


def test_potential_at_matches_grid():
    layout = default_chip_layout()
    rng = np.random.default_rng(5)
    k = rng.uniform(-1.0, 1.0, layout.n_elements) * 3.0e4
    state = CriticalState(k, np.zeros(layout.n_elements), np.zeros(2))
    bias = BiasField.from_gauss(b_x=2.0, b_z=7.0)
    y = np.array([15.0, 80.0]) * UM
    z = np.array([-25.0, 60.0]) * UM
    grid = potential_grid(layout, state, bias, y, z)
    for iy in range(2):
        for iz in range(2):
            point = potential_at(layout, state, bias, y[iy], z[iz])
            assert point == pytest.approx(grid[iy, iz], rel=1e-12)


def test_side_guide_position_and_depth():
    """A uniformly loaded wire plus perpendicular bias makes a side guide
    whose height follows the closed-form field zero; the scan must land on
    it to sub-micrometer accuracy and read the axial bias as the depth."""
    layout = default_chip_layout()
    current = -1.34
    state = uniform_z_state(layout, current)
    bias = BiasField.from_gauss(b_x=-3.0, b_z=9.4)
    y_exact = guide_height(layout, current, bias.b_z)
    assert y_exact / UM == pytest.approx(284.6, abs=1.0)

    options = TrapOptions(window=Window(100.0 * UM, 400.0 * UM,
                                        -100.0 * UM, 100.0 * UM))
    scan = find_minima(layout, state, bias, options)
    interior = scan.interior_minima()
    assert len(interior) == 1
    m = interior[0]
    assert m.refined
    assert m.y == pytest.approx(y_exact, abs=0.5 * UM)
    assert m.z == pytest.approx(0.0, abs=0.5 * UM)
    assert m.u_uK == pytest.approx(3.0 * UK_PER_G, abs=0.05)

    # the refined position must be a stationary point: central differences
    h = 0.01 * UM
    du_dy = (potential_at(layout, state, bias, m.y + h, m.z)
             - potential_at(layout, state, bias, m.y - h, m.z)) / (2 * h)
    du_dz = (potential_at(layout, state, bias, m.y, m.z + h)
             - potential_at(layout, state, bias, m.y, m.z - h)) / (2 * h)
    grad_uK_per_um = np.hypot(du_dy, du_dz) * UM
    assert grad_uK_per_um < 5e-3


def test_boundary_minimum_is_flagged_unbounded():
    # Cut the window off below the true guide height: the potential then
    # falls toward the y_max edge and the reported bottom must carry the
    # unbounded flag instead of masquerading as a trap.
    layout = default_chip_layout()
    state = uniform_z_state(layout, -1.34)
    bias = BiasField.from_gauss(b_x=-3.0, b_z=9.4)
    options = TrapOptions(window=Window(50.0 * UM, 150.0 * UM,
                                        -100.0 * UM, 100.0 * UM))
    scan = analyze_trap(layout, state, bias, options)
    assert scan.minima
    assert scan.minima[0].unbounded
    assert not scan.interior_minima()
    assert scan.saddles == []   # a lone minimum pairs with nothing


# ---------------------------------------------------------------------------
# Flood-fill saddles on synthetic landscapes (no layout involved)


def gaussian_double_well(depth=5.0, floor=10.0, sigma=10.0 * UM,
                         centers=((30.0, 50.0), (70.0, 50.0)), scale=1.0):
    """Two equal Gaussian dips on a 1 um grid.  By symmetry the col sits at
    the midpoint with value floor - 2 depth exp(-d^2 / (8 sigma^2))."""
    grid_y = np.linspace(0.0, 100.0, 101) * UM
    grid_z = np.linspace(0.0, 100.0, 101) * UM
    yy = grid_y[:, None]
    zz = grid_z[None, :]
    u = np.full((101, 101), floor)
    minima = []
    for cy, cz in centers:
        r2 = (yy - cy * UM) ** 2 + (zz - cz * UM) ** 2
        u = u - depth * np.exp(-r2 / (2.0 * sigma ** 2))
    u = u * scale
    for cy, cz in centers:
        iy = int(round(cy))
        iz = int(round(cz))
        minima.append(Minimum(y=cy * UM, z=cz * UM, u_uK=float(u[iy, iz])))
    (c1, c2) = centers
    d2 = ((c1[0] - c2[0]) ** 2 + (c1[1] - c2[1]) ** 2) * UM ** 2
    col = scale * (floor - 2.0 * depth * np.exp(-d2 / (8.0 * sigma ** 2)))
    scan = TrapScan(minima=minima, window=Window(0.0, 100.0 * UM,
                                                 0.0, 100.0 * UM),
                    grid_y=grid_y, grid_z=grid_z, grid_u=u)
    return scan, col


def test_saddle_level_matches_analytic_col():
    scan, col = gaussian_double_well()
    saddle = find_saddle(scan, 0, 1)
    assert saddle.connected
    assert saddle.u_saddle_uK == pytest.approx(col, abs=0.02)
    # the reported col position is approximate: it must lie inside the
    # window on the ridge band just below the connecting level
    iy = int(np.argmin(np.abs(scan.grid_y - saddle.y)))
    iz = int(np.argmin(np.abs(scan.grid_z - saddle.z)))
    u_there = scan.grid_u[iy, iz]
    assert saddle.u_saddle_uK - 0.5 <= u_there <= saddle.u_saddle_uK + 1e-9
    # barrier ~3.6 uK: clearly two separate wells at the default threshold
    assert not saddle.merged


def test_saddle_bracket_independence():
    scan, col = gaussian_double_well()
    default = find_saddle(scan, 0, 1)
    capped = find_saddle(scan, 0, 1, hi_level_uK=col + 0.5)
    assert capped.u_saddle_uK == pytest.approx(default.u_saddle_uK, abs=0.5)
    # a cap below the col makes the basins genuinely disconnected
    blocked = find_saddle(scan, 0, 1, hi_level_uK=col - 0.5)
    assert not blocked.connected
    assert blocked.u_saddle_uK == np.inf
    assert not blocked.merged


def test_merge_flag_tracks_barrier_height():
    # shrink the whole landscape until the barrier dips under the threshold
    scan, col = gaussian_double_well()
    barrier = col - max(m.u_uK for m in scan.minima)
    assert barrier > 1.0          # distinct wells at full scale
    small, _ = gaussian_double_well(scale=0.9 / barrier)
    assert find_saddle(small, 0, 1).merged
    assert not find_saddle(scan, 0, 1).merged


def test_saddle_argument_validation():
    scan, _ = gaussian_double_well()
    with pytest.raises(ValueError, match="distinct"):
        find_saddle(scan, 1, 1)
    scan.minima[1] = Minimum(y=scan.minima[0].y, z=scan.minima[0].z,
                             u_uK=scan.minima[0].u_uK)
    with pytest.raises(ValueError, match="degenerate"):
        find_saddle(scan, 0, 1)


def test_trap_scan_helpers():
    inner = Minimum(y=10.0 * UM, z=0.0, u_uK=1.0)
    edge = Minimum(y=0.0, z=0.0, u_uK=0.5, unbounded=True)
    scan = TrapScan(minima=[inner, edge])
    assert scan.interior_minima() == [inner]
    from beantrap.trap import Saddle
    scan.saddles = [Saddle(pair=(0, 1), u_saddle_uK=1.2, merged=True),
                    Saddle(pair=(0, 2), u_saddle_uK=9.0, merged=False)]
    assert scan.merged_pairs() == [(0, 1)]


def test_window_contains():
    win = Window(1.0 * UM, 10.0 * UM, -5.0 * UM, 5.0 * UM)
    assert win.contains(1.0 * UM, -5.0 * UM)
    assert win.contains(10.0 * UM, 5.0 * UM)
    assert not win.contains(0.5 * UM, 0.0)
    assert not win.contains(2.0 * UM, 6.0 * UM)


# ---------------------------------------------------------------------------
# Contours


def test_contours_of_a_paraboloid(tmp_path):
    grid_y = np.linspace(-20.0, 20.0, 41) * UM
    grid_z = np.linspace(-20.0, 20.0, 41) * UM
    c = 0.01   # uK per um^2
    rr2 = (grid_y[:, None] / UM) ** 2 + (grid_z[None, :] / UM) ** 2
    u = 5.0 + c * rr2

    contours = equipotential_contours(grid_y, grid_z, u, [1.0, 3.0])
    assert {ct.level_uK for ct in contours} == {1.0, 3.0}
    for ct in contours:
        assert ct.level_abs_uK == pytest.approx(5.0 + ct.level_uK)
        radius = np.hypot(ct.vertices[:, 0], ct.vertices[:, 1]) / UM
        expected = np.sqrt(ct.level_uK / c)
        np.testing.assert_allclose(radius, expected, atol=0.1)
    r1 = max(np.hypot(ct.vertices[:, 0], ct.vertices[:, 1]).max()
             for ct in contours if ct.level_uK == 1.0)
    r3 = min(np.hypot(ct.vertices[:, 0], ct.vertices[:, 1]).min()
             for ct in contours if ct.level_uK == 3.0)
    assert r1 < r3   # level sets nest

    path = tmp_path / "contours.csv"
    write_contours_csv(path, contours)
    lines = path.read_text().splitlines()
    n_vertices = sum(len(ct.vertices) for ct in contours)
    assert len(lines) == n_vertices + 2
    assert lines[1].split(",") == ["contour", "level_uK", "vertex",
                                   "y_um", "z_um"]
