"""Cross-checks of the stepped solver against the closed-form thin-strip
profiles: single isolated strip, monotone one-way drive from a fresh cool.

The comparison is done on element averages of the analytic profile (the
solver resolves nothing inside an element), and the penetration front is read
off the simulated profile as the inner edge of the saturated flank, so its
resolution is one element width.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .bean import StepInput, build_inductance, external_potential, field_cool, \
    step_detailed
from .geometry import Strip, build_layout
from .oracle import AnalyticCase, element_average, front_position


@dataclass
class ComparisonReport:
    kind: str
    drive: float
    l2_rel: float
    linf_over_kc: float
    front_sim: float
    front_exact: float
    front_error: float
    current_sim: float
    current_exact: float
    current_error: float
    runtime_s: float
    n_elements: int
    substeps: int

    def summary_lines(self) -> list:
        um = 1e6
        return [
            f"{self.kind} case, drive={self.drive:.6g}:",
            f"  relative L2 error      {self.l2_rel:.3%}",
            f"  max |dK|/K_C           {self.linf_over_kc:.3%}",
            f"  front sim/exact (um)   {self.front_sim * um:.2f} / "
            f"{self.front_exact * um:.2f}  (err {self.front_error * um:+.2f})",
            f"  net current sim/exact  {self.current_sim:.9g} / "
            f"{self.current_exact:.9g} A",
            f"  runtime                {self.runtime_s:.3f} s "
            f"({self.n_elements} elements, {self.substeps} substeps)",
        ]


def _simulate_isolated_strip(kind: str, drive: float, half_width: float,
                             k_c: float, element_width: float,
                             substeps: int):
    layout = build_layout(
        [Strip("strip", center_z=0.0, width=2.0 * half_width, k_c=k_c,
               carries_transport=True)],
        element_width=element_width)
    t0 = time.perf_counter()
    op = build_inductance(layout)
    state = field_cool(layout)
    b_y_prev = 0.0
    for s in range(1, substeps + 1):
        f = s / substeps
        if kind == "field":
            b_y_now = f * drive
            i_now = np.zeros(1)
        else:
            b_y_now = 0.0
            i_now = np.array([f * drive])
        inp = StepInput(
            delta_a_ext=external_potential(layout, b_y_now - b_y_prev),
            i_target=i_now)
        state, _ = step_detailed(state, inp, op)
        b_y_prev = b_y_now
    runtime = time.perf_counter() - t0
    return layout, state.k, runtime


def _front_from_profile(layout, k, k_c, half_width) -> float:
    """Inner edge of the saturated flanks, averaged over both sides; equals
    the strip half-width when nothing is saturated (shallow drives)."""
    sat = np.abs(k) >= k_c * (1.0 - 1.0e-6)
    z = layout.z_centers
    half = 0.5 * layout.widths
    pos = sat & (z > 0)
    neg = sat & (z < 0)
    b_pos = float(np.min(z[pos] - half[pos])) if pos.any() else half_width
    b_neg = float(-np.max(z[neg] + half[neg])) if neg.any() else half_width
    return 0.5 * (b_pos + b_neg)


def _compare(kind: str, drive: float, half_width: float, k_c: float,
             element_width: float, substeps: int) -> ComparisonReport:
    layout, k_sim, runtime = _simulate_isolated_strip(
        kind, drive, half_width, k_c, element_width, substeps)
    case = AnalyticCase(half_width=half_width, k_c=k_c, kind=kind, drive=drive)
    k_exact = element_average(case, layout.z_centers, layout.widths)

    scale = float(np.linalg.norm(k_exact))
    diff = k_sim - k_exact
    l2 = float(np.linalg.norm(diff)) / scale if scale > 0 else \
        float(np.linalg.norm(diff))
    linf = float(np.max(np.abs(diff))) / k_c

    front_sim = _front_from_profile(layout, k_sim, k_c, half_width)
    front_exact = front_position(case)

    current_sim = float(np.sum(k_sim * layout.widths))
    current_exact = drive if kind == "transport" else 0.0
    return ComparisonReport(
        kind=kind, drive=drive, l2_rel=l2, linf_over_kc=linf,
        front_sim=front_sim, front_exact=front_exact,
        front_error=front_sim - front_exact,
        current_sim=current_sim, current_exact=current_exact,
        current_error=abs(current_sim - current_exact),
        runtime_s=runtime, n_elements=layout.n_elements, substeps=substeps)


def compare_field_case(b_applied: float, half_width: float = 50.0e-6,
                       k_c: float = 4.5e4, element_width: float = 1.0e-6,
                       substeps: int = 40) -> ComparisonReport:
    """Perpendicular-field magnetization of a current-free strip."""
    return _compare("field", b_applied, half_width, k_c, element_width,
                    substeps)


def compare_transport_case(i_transport: float, half_width: float = 20.0e-6,
                           k_c: float = 4.5e4, element_width: float = 1.0e-6,
                           substeps: int = 40) -> ComparisonReport:
    """Zero-field transport current ramped monotonically from a fresh cool."""
    return _compare("transport", i_transport, half_width, k_c, element_width,
                    substeps)


def dump_profiles_csv(path, kind: str, drive: float, half_width: float,
                      k_c: float, element_width: float = 1.0e-6,
                      substeps: int = 40) -> None:
    """Write z, simulated K, and exact element-averaged K side by side."""
    import csv

    layout, k_sim, _ = _simulate_isolated_strip(
        kind, drive, half_width, k_c, element_width, substeps)
    case = AnalyticCase(half_width=half_width, k_c=k_c, kind=kind, drive=drive)
    k_exact = element_average(case, layout.z_centers, layout.widths)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["z_um", "k_sim_A_per_m", "k_exact_A_per_m"])
        for z, ks, ke in zip(layout.z_centers, k_sim, k_exact):
            writer.writerow([f"{z * 1e6:.6f}", f"{ks:.10e}", f"{ke:.10e}"])
