"""Wire layout: parallel thin-film strips tiled into piecewise-constant elements.

The chip carries zero-thickness superconducting strips in the y = 0 plane,
infinitely extended along x, each described by its transverse center z, width,
and sheet critical current density K_C (A/m).  For the numerics every strip is
tiled into n = ceil(width / element_width) equal elements so the tiling is
exact: a 40 um strip at a 3 um nominal element width becomes 14 elements of
40/14 um, a 300 um strip becomes 100 elements of exactly 3 um.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import GeometryError
from .units import UM


@dataclass(frozen=True)
class Strip:
    """One thin-film wire: center/width in meters, k_c in A/m."""

    name: str
    center_z: float
    width: float
    k_c: float
    carries_transport: bool = False

    @property
    def z_left(self) -> float:
        return self.center_z - 0.5 * self.width

    @property
    def z_right(self) -> float:
        return self.center_z + 0.5 * self.width

    @property
    def critical_current(self) -> float:
        """Maximum transport current the strip can carry, K_C * width (A)."""
        return self.k_c * self.width


class ChipLayout:
    """Immutable element discretization of a set of non-overlapping strips.

    Attributes (read-only numpy arrays over the N elements, strip-ordered):
        z_centers     element center positions (m)
        widths        element widths (m)
        strip_index   index into `strips` for each element
        k_c           per-element critical sheet density (A/m)
    """

    def __init__(self, strips: Sequence[Strip], element_width: float):
        strips = tuple(strips)
        _validate_strips(strips, element_width)
        self.strips = strips
        self.element_width = float(element_width)

        centers, widths, owner = [], [], []
        for s_idx, strip in enumerate(strips):
            n = _elements_for(strip.width, element_width)
            w = strip.width / n
            for i in range(n):
                centers.append(strip.z_left + (i + 0.5) * w)
                widths.append(w)
                owner.append(s_idx)

        self.z_centers = _frozen(np.asarray(centers, dtype=float))
        self.widths = _frozen(np.asarray(widths, dtype=float))
        self.strip_index = _frozen(np.asarray(owner, dtype=np.intp))
        self.k_c = _frozen(np.asarray(
            [strips[s].k_c for s in self.strip_index], dtype=float))

    @property
    def n_elements(self) -> int:
        return self.z_centers.size

    @property
    def n_strips(self) -> int:
        return len(self.strips)

    def strip_slice(self, strip: int) -> slice:
        """Contiguous element slice belonging to strip index `strip`."""
        idx = np.flatnonzero(self.strip_index == strip)
        return slice(int(idx[0]), int(idx[-1]) + 1)

    def strip_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.strips)

    def strip_by_name(self, name: str) -> int:
        for i, s in enumerate(self.strips):
            if s.name == name:
                return i
        raise KeyError(f"no strip named {name!r}")

    def layout_hash(self) -> str:
        """Deterministic content hash of the layout (strips + element width)."""
        parts = [f"element_width={self.element_width!r}"]
        for s in self.strips:
            parts.append(
                f"{s.name}|{s.center_z!r}|{s.width!r}|{s.k_c!r}|{s.carries_transport}")
        return hashlib.sha256("\n".join(parts).encode()).hexdigest()

    def __repr__(self) -> str:
        names = ",".join(s.name for s in self.strips)
        return (f"ChipLayout(strips=[{names}], n_elements={self.n_elements}, "
                f"element_width={self.element_width / UM:g} um)")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _elements_for(width: float, element_width: float) -> int:
    # round() guards against numeric noise in width/element_width flipping ceil
    return max(1, math.ceil(round(width / element_width, 9)))


def _validate_strips(strips: Sequence[Strip], element_width: float) -> None:
    if not strips:
        raise GeometryError("layout needs at least one strip")
    if element_width <= 0:
        raise GeometryError("element_width must be positive")
    names = [s.name for s in strips]
    if len(set(names)) != len(names):
        raise GeometryError(f"duplicate strip names: {names}")
    for s in strips:
        if s.width <= 0:
            raise GeometryError(f"strip {s.name!r}: width must be positive")
        if s.k_c <= 0:
            raise GeometryError(f"strip {s.name!r}: k_c must be positive")
        if element_width > s.width * (1 + 1e-12):
            raise GeometryError(
                f"strip {s.name!r}: element_width {element_width} exceeds strip width")
    by_pos = sorted(strips, key=lambda s: s.center_z)
    for a, b in zip(by_pos, by_pos[1:]):
        if a.z_right > b.z_left + 1e-15:
            raise GeometryError(
                f"strips {a.name!r} and {b.name!r} overlap "
                f"({a.z_right / UM:.3f} um > {b.z_left / UM:.3f} um)")


def build_layout(strips: Sequence[Strip], element_width: float = 3.0e-6) -> ChipLayout:
    return ChipLayout(strips, element_width)


def default_chip_layout(gap: float = 55.0e-6,
                        element_width: float = 3.0e-6) -> ChipLayout:
    """Two-wire layout used throughout: a 40 um transport wire centered at
    z = 0 and a 300 um wire on its +z side, separated edge-to-edge by `gap`.
    The edge-to-edge spacing of the two films is not pinned down by any
    single measurement, so it is a config parameter; the 55 um default is
    calibrated jointly against the initial trap height (~250 um above the
    transport wire at 1.34 A under a 9.4 G bias), the field at which the
    frozen-flux double wells merge, and the approach distance at which the
    zero-field-cooled trap opens toward the surface.  Both films share
    K_C = 4.5e4 A/m, i.e. 45 mA/um, which makes the 40 um wire's critical
    current 1.8 A.
    """
    k_c = 4.5e4
    z_wire = Strip("Z", center_z=0.0, width=40.0e-6, k_c=k_c, carries_transport=True)
    u_left = z_wire.z_right + gap
    u_wire = Strip("U", center_z=u_left + 150.0e-6, width=300.0e-6, k_c=k_c,
                   carries_transport=True)
    return ChipLayout((z_wire, u_wire), element_width)
