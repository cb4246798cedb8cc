"""Magnetic field of the element currents plus a uniform bias.

Each element is an infinite ribbon along x at y = 0 spanning z in
[z_l, z_r] with uniform sheet density K (A/m).  Integrating the
line-current field over the ribbon gives the closed form

    B_y(y, z) = -(mu0 K / 4 pi) * ln( (y^2 + u_l^2) / (y^2 + u_r^2) )
    B_z(y, z) =  (mu0 K / 2 pi) * ( arctan(u_l / y) - arctan(u_r / y) )

with u_l = z - z_l, u_r = z - z_r: one logarithm and one arctangent per
element.  Currents along x produce no B_x, so the x component is the bias
alone.  At y = 0 outside any strip both arctangents cancel and B_z = 0;
evaluation within 0.1 um of the film plane inside a strip is rejected as
singular.  Fields are superpositions, so a zero-current state reproduces the
bias exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .bean import CriticalState
from .errors import SingularPointError
from .geometry import ChipLayout
from .units import GAUSS, MU0, UM

FILM_EXCLUSION = 0.1e-6   # half-thickness of the rejected slab around a strip


@dataclass(frozen=True)
class BiasField:
    """Uniform applied field in tesla."""

    b_x: float = 0.0
    b_y: float = 0.0
    b_z: float = 0.0

    @classmethod
    def from_gauss(cls, b_x: float = 0.0, b_y: float = 0.0,
                   b_z: float = 0.0) -> "BiasField":
        return cls(b_x * GAUSS, b_y * GAUSS, b_z * GAUSS)

    def as_array(self) -> np.ndarray:
        return np.array([self.b_x, self.b_y, self.b_z])


def _singular_mask(layout: ChipLayout, y, z) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    near_plane = np.abs(y) < FILM_EXCLUSION
    inside = np.zeros(np.broadcast(y, z).shape, dtype=bool)
    for s in layout.strips:
        inside |= (z >= s.z_left - FILM_EXCLUSION) & (z <= s.z_right + FILM_EXCLUSION)
    return near_plane & inside


def sheet_field(y, z, z_left: float, z_right: float, k: float):
    """(B_y, B_z) of one uniform ribbon; broadcasts over y, z arrays."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    u_l = z - z_left
    u_r = z - z_right
    y2 = y * y
    pref = MU0 * k / (2.0 * np.pi)
    b_y = -0.5 * pref * (np.log(y2 + u_l * u_l) - np.log(y2 + u_r * u_r))
    with np.errstate(divide="ignore", invalid="ignore"):
        b_z = pref * (np.arctan(u_l / y) - np.arctan(u_r / y))
    # on the film plane outside the ribbon the circulation closes: B_z = 0
    b_z = np.where(y == 0.0, 0.0, b_z)
    return b_y, b_z


def field_at(layout: ChipLayout, state: CriticalState, bias: BiasField,
             y: float, z: float) -> np.ndarray:
    """Total field (B_x, B_y, B_z) in tesla at a single point (y, z)."""
    if _singular_mask(layout, y, z):
        raise SingularPointError(
            f"field evaluation at (y={y / UM:.3f} um, z={z / UM:.3f} um) is "
            f"within {FILM_EXCLUSION / UM} um of a current-carrying film")
    b = field_grid(layout, state, bias, np.array([y]), np.array([z]),
                   _skip_singular_check=True)
    return b[0, 0]


def field_grid(layout: ChipLayout, state: CriticalState, bias: BiasField,
               y_values: np.ndarray, z_values: np.ndarray,
               _skip_singular_check: bool = False) -> np.ndarray:
    """Field on the tensor grid y_values x z_values; returns (ny, nz, 3)."""
    y_values = np.asarray(y_values, dtype=float)
    z_values = np.asarray(z_values, dtype=float)
    if not _skip_singular_check:
        yy = y_values[:, None]
        zz = z_values[None, :]
        mask = _singular_mask(layout, yy, zz)
        if mask.any():
            iy, iz = np.argwhere(mask)[0]
            raise SingularPointError(
                f"grid node (y={y_values[iy] / UM:.3f} um, "
                f"z={z_values[iz] / UM:.3f} um) lies on a current-carrying film")

    ny, nz = y_values.size, z_values.size
    b = np.zeros((ny, nz, 3))
    b[..., 0] = bias.b_x
    b[..., 1] = bias.b_y
    b[..., 2] = bias.b_z

    yy = y_values[:, None]
    k = state.k
    z_l_all = layout.z_centers - 0.5 * layout.widths
    z_r_all = layout.z_centers + 0.5 * layout.widths
    for j in range(layout.n_elements):
        if k[j] == 0.0:
            continue
        b_y, b_z = sheet_field(yy, z_values[None, :], z_l_all[j], z_r_all[j], k[j])
        b[..., 1] += b_y
        b[..., 2] += b_z
    return b


@dataclass(frozen=True)
class GridSpec:
    """Regular evaluation grid (meters).  Steps are honored up to rounding the
    span to a whole number of cells."""

    y_min: float
    y_max: float
    y_step: float
    z_min: float
    z_max: float
    z_step: float

    def y_values(self) -> np.ndarray:
        return _axis(self.y_min, self.y_max, self.y_step)

    def z_values(self) -> np.ndarray:
        return _axis(self.z_min, self.z_max, self.z_step)


def _axis(lo: float, hi: float, step: float) -> np.ndarray:
    if hi < lo:
        raise ValueError("grid axis has max < min")
    if step <= 0:
        raise ValueError("grid step must be positive")
    n = max(int(round((hi - lo) / step)), 1) + 1
    return np.linspace(lo, hi, n)


@dataclass
class FieldMap:
    """Field sampled on a regular grid; b has shape (ny, nz, 3), tesla."""

    y: np.ndarray
    z: np.ndarray
    b: np.ndarray
    crosses_film: bool = False

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.b * self.b, axis=-1))

    def write_csv(self, path, layout_hash: str = "") -> None:
        with open(path, "w", newline="") as fh:
            fh.write("# field map: columns y_um, z_um, Bx_G, By_G, Bz_G, Bmag_G\n")
            fh.write(f"# grid: y {self.y[0] / UM:g}..{self.y[-1] / UM:g} um "
                     f"({self.y.size} pts), z {self.z[0] / UM:g}.."
                     f"{self.z[-1] / UM:g} um ({self.z.size} pts)\n")
            if layout_hash:
                fh.write(f"# layout: {layout_hash}\n")
            writer = csv.writer(fh)
            writer.writerow(["y_um", "z_um", "Bx_G", "By_G", "Bz_G", "Bmag_G"])
            mag = self.magnitude()
            for iy in range(self.y.size):
                for iz in range(self.z.size):
                    bx, by, bz = self.b[iy, iz] / GAUSS
                    writer.writerow([
                        f"{self.y[iy] / UM:.6f}", f"{self.z[iz] / UM:.6f}",
                        f"{bx:.10e}", f"{by:.10e}", f"{bz:.10e}",
                        f"{mag[iy, iz] / GAUSS:.10e}"])


def field_map(layout: ChipLayout, state: CriticalState, bias: BiasField,
              grid: GridSpec) -> FieldMap:
    y = grid.y_values()
    z = grid.z_values()
    b = field_grid(layout, state, bias, y, z)
    return FieldMap(y=y, z=z, b=b, crosses_film=bool(np.min(y) <= 0.0))
