"""Microtrap analysis of the total field: potential landscape U(y, z),
local minima, inter-well saddles, and equipotential contours.

For weak-field-seeking atoms the potential is linear in the field magnitude,

    U / k_B = g_F m_F (mu_B / k_B) |B|

i.e. about 67.17 uK per gauss for g_F m_F = 1 (the default).  Gravity is
omitted.  Minima are located on a coarse scan grid, polished by a
derivative-free simplex search, de-duplicated within a merge radius, and
flagged when they sit against the search-window boundary (the true minimum
may lie outside, e.g. a well that has escaped toward the chip surface).
Saddle heights between two wells are found by bisecting a flood level: the
lowest U at which the two sublevel components connect on the scan grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.optimize import minimize
from skimage import measure

from .bean import CriticalState
from .geometry import ChipLayout
from .magnetics import BiasField, field_grid
from .units import GAUSS, MU0, MUB_OVER_KB, UM


@dataclass(frozen=True)
class TrapParams:
    """Zeeman scaling: U/k_B = g_factor_m_f * (mu_B/k_B) * |B|."""

    g_factor_m_f: float = 1.0

    @property
    def uK_per_tesla(self) -> float:
        return self.g_factor_m_f * MUB_OVER_KB * 1e6

    @property
    def uK_per_gauss(self) -> float:
        return self.uK_per_tesla * GAUSS


def potential_uK(b_magnitude_tesla, params: TrapParams = TrapParams()):
    return params.uK_per_tesla * np.asarray(b_magnitude_tesla)


@dataclass(frozen=True)
class Window:
    """Search window in the (y, z) plane, meters; y_min must stay above the
    film plane."""

    y_min: float
    y_max: float
    z_min: float
    z_max: float

    def contains(self, y: float, z: float) -> bool:
        return (self.y_min <= y <= self.y_max) and (self.z_min <= z <= self.z_max)


@dataclass
class Minimum:
    y: float
    z: float
    u_uK: float
    refined: bool = True
    unbounded: bool = False     # sits on the window edge; true bottom outside

    def position_um(self) -> tuple[float, float]:
        return (self.y / UM, self.z / UM)


@dataclass
class Saddle:
    pair: tuple[int, int]
    u_saddle_uK: float
    y: Optional[float] = None
    z: Optional[float] = None
    connected: bool = True
    merged: bool = False


@dataclass
class TrapScan:
    """Result of one window analysis; keeps the scan grid for flood fills."""

    minima: list
    saddles: list = field(default_factory=list)
    window: Optional[Window] = None
    grid_y: np.ndarray = field(default=None, repr=False)
    grid_z: np.ndarray = field(default=None, repr=False)
    grid_u: np.ndarray = field(default=None, repr=False)

    def interior_minima(self) -> list:
        return [m for m in self.minima if not m.unbounded]

    def merged_pairs(self) -> list:
        return [s.pair for s in self.saddles if s.merged]


@dataclass(frozen=True)
class TrapOptions:
    window: Window = Window(0.5e-6, 400.0e-6, -300.0e-6, 500.0e-6)
    coarse_step: float = 2.0e-6
    merge_distance: float = 5.0e-6
    merge_threshold_uK: float = 1.0
    saddle_level_tol_uK: float = 0.005
    refine_xatol: float = 2.0e-10
    params: TrapParams = TrapParams()
    compute_saddles: bool = True
    max_minima: int = 6


def _layout_arrays(layout: ChipLayout):
    z_l = layout.z_centers - 0.5 * layout.widths
    z_r = layout.z_centers + 0.5 * layout.widths
    return z_l, z_r


def potential_at(layout: ChipLayout, state: CriticalState, bias: BiasField,
                 y: float, z: float, params: TrapParams = TrapParams()) -> float:
    """U(y, z) in uK from a single vectorized pass over the elements."""
    z_l, z_r = _layout_arrays(layout)
    k = state.k
    u_l = z - z_l
    u_r = z - z_r
    y2 = y * y
    pref = MU0 * k / (2.0 * np.pi)
    b_y = bias.b_y - 0.5 * np.sum(pref * (np.log(y2 + u_l * u_l)
                                          - np.log(y2 + u_r * u_r)))
    b_z = bias.b_z + np.sum(pref * (np.arctan(u_l / y) - np.arctan(u_r / y)))
    mag = np.sqrt(bias.b_x ** 2 + b_y ** 2 + b_z ** 2)
    return float(params.uK_per_tesla * mag)


def potential_grid(layout: ChipLayout, state: CriticalState, bias: BiasField,
                   y_values: np.ndarray, z_values: np.ndarray,
                   params: TrapParams = TrapParams()) -> np.ndarray:
    b = field_grid(layout, state, bias, y_values, z_values)
    return params.uK_per_tesla * np.sqrt(np.sum(b * b, axis=-1))


def _grid_axis(lo: float, hi: float, step: float) -> np.ndarray:
    n = max(int(round((hi - lo) / step)), 1) + 1
    return np.linspace(lo, hi, n)


def find_minima(layout: ChipLayout, state: CriticalState, bias: BiasField,
                options: TrapOptions = TrapOptions()) -> TrapScan:
    """Scan the window on the coarse grid, refine every candidate minimum,
    merge duplicates, and sort by depth."""
    win = options.window
    y_grid = _grid_axis(win.y_min, win.y_max, options.coarse_step)
    z_grid = _grid_axis(win.z_min, win.z_max, options.coarse_step)
    u = potential_grid(layout, state, bias, y_grid, z_grid, options.params)

    candidates = _grid_local_minima(u)
    minima = []
    for iy, iz in candidates:
        m = _refine_minimum(layout, state, bias, options,
                            y_grid[iy], z_grid[iz], u[iy, iz])
        minima.append(m)

    minima = _merge_close(minima, options.merge_distance)
    minima.sort(key=lambda m: m.u_uK)
    del minima[options.max_minima:]
    return TrapScan(minima=minima, window=win,
                    grid_y=y_grid, grid_z=z_grid, grid_u=u)


def _grid_local_minima(u: np.ndarray):
    """Grid nodes strictly smaller than every 8-neighbor; nodes on the window
    edge compare against the neighbors they have, so boundary minima survive
    and can be flagged as unbounded after refinement."""
    ny, nz = u.shape
    best = np.full((ny, nz), True)
    big = np.inf
    padded = np.full((ny + 2, nz + 2), big)
    padded[1:-1, 1:-1] = u
    for dy in (-1, 0, 1):
        for dz in (-1, 0, 1):
            if dy == 0 and dz == 0:
                continue
            neigh = padded[1 + dy:ny + 1 + dy, 1 + dz:nz + 1 + dz]
            best &= u < neigh
    return [tuple(idx) for idx in np.argwhere(best)]


def _refine_minimum(layout, state, bias, options, y0, z0, u0) -> Minimum:
    win = options.window
    fun = lambda p: potential_at(layout, state, bias, p[0], p[1], options.params)
    res = minimize(fun, x0=np.array([y0, z0]), method="Nelder-Mead",
                   bounds=[(win.y_min, win.y_max), (win.z_min, win.z_max)],
                   options={"xatol": options.refine_xatol, "fatol": 1e-6,
                            "maxfev": 2000})
    y, z = res.x
    u_val = float(res.fun)
    if u_val > u0:      # refinement must not climb; keep the grid point
        y, z, u_val = y0, z0, float(u0)
    margin = 0.25 * options.coarse_step
    unbounded = (y - win.y_min < margin or win.y_max - y < margin
                 or z - win.z_min < margin or win.z_max - z < margin)
    return Minimum(y=float(y), z=float(z), u_uK=u_val, refined=res.success,
                   unbounded=unbounded)


def _merge_close(minima, merge_distance):
    kept = []
    for m in sorted(minima, key=lambda m: m.u_uK):
        dup = any(np.hypot(m.y - k.y, m.z - k.z) < merge_distance for k in kept)
        if not dup:
            kept.append(m)
    return kept


def find_saddle(scan: TrapScan, i: int, j: int,
                options: TrapOptions = TrapOptions(),
                hi_level_uK: float | None = None) -> Saddle:
    """Lowest flood level connecting minima i and j on the scan grid.

    Bisects the level between the deeper bottoms and the grid maximum (or
    `hi_level_uK`); a pair whose sublevel components never connect inside the
    window is reported with u_saddle = +inf and merged = False.
    """
    if i == j:
        raise ValueError("saddle needs two distinct minima")
    a, b = scan.minima[i], scan.minima[j]
    if (a.y, a.z) == (b.y, b.z):
        raise ValueError("degenerate pair: identical minima")

    node_a = _nearest_node(scan, a)
    node_b = _nearest_node(scan, b)
    u = scan.grid_u
    lo = float(max(u[node_a], u[node_b]))
    hi = float(u.max() if hi_level_uK is None else min(hi_level_uK, u.max()))

    if _connected(u, node_a, node_b, lo):
        saddle_level = lo
    elif not _connected(u, node_a, node_b, hi):
        return Saddle(pair=(i, j), u_saddle_uK=np.inf, connected=False,
                      merged=False)
    else:
        while hi - lo > options.saddle_level_tol_uK:
            mid = 0.5 * (lo + hi)
            if _connected(u, node_a, node_b, mid):
                hi = mid
            else:
                lo = mid
        saddle_level = hi

    sy, sz = _saddle_location(scan, node_a, node_b, saddle_level)
    barrier = saddle_level - max(a.u_uK, b.u_uK)
    return Saddle(pair=(i, j), u_saddle_uK=saddle_level, y=sy, z=sz,
                  connected=True,
                  merged=barrier < options.merge_threshold_uK)


def _nearest_node(scan: TrapScan, m: Minimum) -> tuple[int, int]:
    iy = int(np.clip(np.searchsorted(scan.grid_y, m.y), 1, scan.grid_y.size - 1))
    if abs(scan.grid_y[iy - 1] - m.y) < abs(scan.grid_y[iy] - m.y):
        iy -= 1
    iz = int(np.clip(np.searchsorted(scan.grid_z, m.z), 1, scan.grid_z.size - 1))
    if abs(scan.grid_z[iz - 1] - m.z) < abs(scan.grid_z[iz] - m.z):
        iz -= 1
    # the node actually representing the well is the lowest one nearby
    y0, y1 = max(iy - 1, 0), min(iy + 2, scan.grid_y.size)
    z0, z1 = max(iz - 1, 0), min(iz + 2, scan.grid_z.size)
    local = scan.grid_u[y0:y1, z0:z1]
    dy, dz = np.unravel_index(np.argmin(local), local.shape)
    return (y0 + int(dy), z0 + int(dz))


def _connected(u, node_a, node_b, level) -> bool:
    mask = u <= level
    if not (mask[node_a] and mask[node_b]):
        return False
    labels, _ = ndimage.label(mask)
    return labels[node_a] == labels[node_b]


def _saddle_location(scan, node_a, node_b, level):
    """Approximate col position: the lowest grid node that only floods near
    the connecting level (inside the joint component, above both basins)."""
    u = scan.grid_u
    mask = u <= level
    labels, _ = ndimage.label(mask)
    joint = labels == labels[node_a]
    bridge = joint & (u >= level - 0.5)
    if not bridge.any():
        return None, None
    flat = np.argmin(np.where(bridge, u, np.inf))
    iy, iz = np.unravel_index(flat, u.shape)
    return float(scan.grid_y[iy]), float(scan.grid_z[iz])


def analyze_trap(layout: ChipLayout, state: CriticalState, bias: BiasField,
                 options: TrapOptions = TrapOptions()) -> TrapScan:
    """find_minima plus saddles/merge flags for every pair of minima with at
    least one interior member.  Interior-boundary saddles measure the barrier
    over which atoms escape toward the window edge (chip surface); pairs of
    boundary minima are skipped because both are already open."""
    scan = find_minima(layout, state, bias, options)
    if options.compute_saddles:
        n = len(scan.minima)
        for i in range(n):
            for j in range(i + 1, n):
                if scan.minima[i].unbounded and scan.minima[j].unbounded:
                    continue
                scan.saddles.append(find_saddle(scan, i, j, options))
    return scan


@dataclass
class Contour:
    level_uK: float            # above the window minimum
    level_abs_uK: float
    vertices: np.ndarray       # (n, 2) columns (y, z) in meters


def equipotential_contours(grid_y, grid_z, grid_u, levels_uK) -> list:
    """Marching-squares contours of U at levels measured from the grid
    minimum; vertices are interpolated between nodes."""
    u_min = float(grid_u.min())
    dy = grid_y[1] - grid_y[0] if grid_y.size > 1 else 1.0
    dz = grid_z[1] - grid_z[0] if grid_z.size > 1 else 1.0
    out = []
    for level in levels_uK:
        absolute = u_min + level
        for path in measure.find_contours(grid_u, absolute):
            verts = np.column_stack([grid_y[0] + path[:, 0] * dy,
                                     grid_z[0] + path[:, 1] * dz])
            out.append(Contour(level_uK=float(level), level_abs_uK=absolute,
                               vertices=verts))
    return out


def write_contours_csv(path, contours) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        fh.write("# equipotential polylines: level is uK above the window "
                 "minimum\n")
        writer = csv.writer(fh)
        writer.writerow(["contour", "level_uK", "vertex", "y_um", "z_um"])
        for cid, c in enumerate(contours):
            for v_idx, (y, z) in enumerate(c.vertices):
                writer.writerow([cid, f"{c.level_uK:.6g}", v_idx,
                                 f"{y / UM:.6f}", f"{z / UM:.6f}"])
