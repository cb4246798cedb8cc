"""Critical-state evolution of sheet currents in thin-film strips.

The film is discretized into piecewise-constant sheet-current elements
(geometry module).  A history step applies a change of external vector
potential delta_a(z) = dB_y * z plus per-wire transport targets, and the new
current distribution minimizes the magnetic energy of the change

    E(dq) = 0.5 * dq^T G dq + dq^T delta_a,      dq_i = w_i * dk_i  (A)

subject to |k_i + dk_i| <= K_C(i) and fixed per-wire totals
sum_i (k_i + dk_i) w_i = I_target.  G is the 2D vector-potential kernel per
unit element current.  This time-stepped energy minimization reproduces the
standard hysteretic critical-state behavior: profiles depend on the history
of B_y and transport currents, not on ramp rates, and are erased only by a
transition to the normal state.

Only the field component perpendicular to the film (B_y) drives screening;
in-plane components thread no flux through a zero-thickness film.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import qp
from .errors import FeasibilityError, GeometryError, SolverError
from .geometry import ChipLayout
from .units import MU0


@dataclass(frozen=True)
class InductanceOperator:
    """Closed-form vector-potential coefficients for the element grid.

    matrix[i, j] is the vector potential A_x at element i's center per unit
    sheet-current density (A/m) on element j,

        M_ij = (mu0 / 2 pi) * integral_elem_j ln(L / |z_i - z'|) dz'

    evaluated analytically (antiderivative x ln|x| - x), then symmetrized;
    the self term is (mu0 / 2 pi) * w * (ln(2 L / w) + 1).  `energy` is the
    same kernel per unit element *current*, used as the QP Hessian.  The
    reference length L only shifts the kernel by a constant; with per-wire
    totals constrained the accepted current changes are gauge independent.
    """

    matrix: np.ndarray
    energy: np.ndarray
    reference_length: float
    layout: ChipLayout = field(repr=False)

    def check_positive_definite(self) -> None:
        """Cholesky of the energy kernel projected on zero per-wire-total
        current changes (the directions the constrained minimization can
        actually move in).  Raises SolverError if the projection fails."""
        lay = self.layout
        cols = []
        n = lay.n_elements
        for s in range(lay.n_strips):
            members = np.flatnonzero(lay.strip_index == s)
            for a, b in zip(members, members[1:]):
                v = np.zeros(n)
                v[a], v[b] = 1.0, -1.0
                cols.append(v)
        if not cols:
            return
        basis = np.column_stack(cols)
        projected = basis.T @ self.energy @ basis
        try:
            np.linalg.cholesky(projected)
        except np.linalg.LinAlgError as exc:
            raise SolverError(
                "energy kernel is not positive definite on the "
                "fixed-transport subspace") from exc


def build_inductance(layout: ChipLayout,
                     reference_length: float = 1.0) -> InductanceOperator:
    z = layout.z_centers
    w = layout.widths
    if z.size > 1 and np.min(np.diff(np.sort(z))) <= 0.0:
        raise GeometryError("coincident element centers")
    if reference_length <= 0.0:
        raise GeometryError("reference_length must be positive")

    d = z[:, None] - z[None, :]
    half = 0.5 * w[None, :]
    integral = _f_log(d + half) - _f_log(d - half)     # int ln|z_i - z'| dz'
    m = (MU0 / (2.0 * np.pi)) * (w[None, :] * np.log(reference_length) - integral)
    m = 0.5 * (m + m.T)
    g = m / w[None, :]
    g = 0.5 * (g + g.T)
    m.flags.writeable = False
    g.flags.writeable = False
    return InductanceOperator(matrix=m, energy=g,
                              reference_length=float(reference_length),
                              layout=layout)


def _f_log(x: np.ndarray) -> np.ndarray:
    """Antiderivative of ln|x|:  x (ln|x| - 1), continuous with F(0) = 0."""
    out = np.zeros_like(x)
    nz = x != 0.0
    out[nz] = x[nz] * (np.log(np.abs(x[nz])) - 1.0)
    return out


def external_potential(layout: ChipLayout, b_y: float) -> np.ndarray:
    """Vector potential of a uniform perpendicular field at the element
    centers, gauge a_x(z) = B_y * z (T*m)."""
    return b_y * layout.z_centers


@dataclass
class CriticalState:
    """Snapshot of the persistent-current state of the film.

    k               per-element sheet current density (A/m)
    a_ext_baseline  external potential frozen in at the last cool-down (T*m)
    i_wire          per-strip transport current (A)
    superconducting False after a transition to the normal state
    """

    k: np.ndarray
    a_ext_baseline: np.ndarray
    i_wire: np.ndarray
    superconducting: bool = True

    def copy(self) -> "CriticalState":
        return CriticalState(self.k.copy(), self.a_ext_baseline.copy(),
                             self.i_wire.copy(), self.superconducting)


@dataclass(frozen=True)
class StepInput:
    """One history step: change of external potential at the element centers
    (T*m) plus absolute per-strip transport targets (A)."""

    delta_a_ext: np.ndarray
    i_target: np.ndarray


@dataclass
class StepReport:
    """Residuals of one accepted step.  kkt_residual is normalized by the
    gradient scale (energy units); transport_residual is in amperes; k_over_kc
    is max |k|/K_C of the new state."""

    kkt_residual: float = 0.0
    stationarity: float = 0.0
    sign_violation: float = 0.0
    transport_residual: float = 0.0
    k_over_kc: float = 0.0
    objective: float = 0.0
    objective_start: float = 0.0
    n_iterations: int = 0
    n_clamped: int = 0


def normal_state(layout: ChipLayout) -> CriticalState:
    n = layout.n_elements
    return CriticalState(np.zeros(n), np.zeros(n),
                         np.zeros(layout.n_strips), superconducting=False)


def field_cool(layout: ChipLayout, b_y_at_cooling: float = 0.0,
               i_wire_at_cooling: np.ndarray | None = None,
               allow_nonzero_current: bool = False) -> CriticalState:
    """Cool the film through its transition in a uniform perpendicular field.

    The frozen state carries no screening currents (k = 0) and remembers the
    cool-down potential as the baseline; subsequent field changes are screened
    relative to it.  Cooling with a transport current applied is not part of
    any supported sequence and is rejected unless explicitly allowed.
    """
    i = np.zeros(layout.n_strips) if i_wire_at_cooling is None \
        else np.asarray(i_wire_at_cooling, dtype=float).copy()
    if i.shape != (layout.n_strips,):
        raise ValueError("i_wire_at_cooling has wrong length")
    if np.any(i != 0.0) and not allow_nonzero_current:
        raise FeasibilityError(
            "cooling with nonzero transport current is not supported "
            "(pass allow_nonzero_current=True to override)")
    return CriticalState(
        k=np.zeros(layout.n_elements),
        a_ext_baseline=external_potential(layout, b_y_at_cooling),
        i_wire=i,
        superconducting=True,
    )


def transition_to_normal(state: CriticalState) -> CriticalState:
    """Drive the film normal: every persistent current dies."""
    return CriticalState(np.zeros_like(state.k), np.zeros_like(state.a_ext_baseline),
                         np.zeros_like(state.i_wire), superconducting=False)


def step(state: CriticalState, inp: StepInput, op: InductanceOperator,
         max_iterations: int | None = None) -> CriticalState:
    new_state, _ = step_detailed(state, inp, op, max_iterations)
    return new_state


def step_detailed(state: CriticalState, inp: StepInput, op: InductanceOperator,
                  max_iterations: int | None = None
                  ) -> tuple[CriticalState, StepReport]:
    """Advance the critical state by one history step (see module docstring).

    Raises FeasibilityError when a transport target exceeds K_C * width of its
    strip, and SolverError when the constrained minimization fails to reach
    its KKT tolerance.
    """
    layout = op.layout
    if not state.superconducting:
        raise FeasibilityError("step requires a superconducting state; "
                               "run a field cool first")
    delta_a = np.asarray(inp.delta_a_ext, dtype=float)
    i_target = np.asarray(inp.i_target, dtype=float)
    if delta_a.shape != (layout.n_elements,):
        raise ValueError("delta_a_ext has wrong length")
    if i_target.shape != (layout.n_strips,):
        raise ValueError("i_target has wrong length")

    for s, strip in enumerate(layout.strips):
        limit = strip.critical_current
        if abs(i_target[s]) > limit * (1.0 + 1e-12):
            raise FeasibilityError(
                f"transport target {i_target[s]:.6g} A on strip "
                f"{strip.name!r} exceeds its critical current "
                f"{limit:.6g} A (K_C * width)")

    w = layout.widths
    k_c = layout.k_c
    groups = layout.strip_index
    current_i = np.zeros(layout.n_strips)
    np.add.at(current_i, groups, state.k * w)

    if not delta_a.any() and np.allclose(i_target, current_i, rtol=0.0,
                                         atol=1e-15):
        new = state.copy()
        new.i_wire = i_target.copy()
        report = StepReport(k_over_kc=float(np.max(np.abs(new.k) / k_c)))
        return new, report

    lower = w * (-k_c - state.k)
    upper = w * (k_c - state.k)
    # roundoff guard: a snapped state keeps 0 inside [lower, upper] exactly
    lower = np.minimum(lower, 0.0)
    upper = np.maximum(upper, 0.0)

    try:
        result = qp.solve_box_equality_qp(
            op.energy, delta_a, lower, upper, groups,
            i_target - current_i, max_iterations=max_iterations)
    except ValueError as exc:
        raise FeasibilityError(str(exc)) from exc

    k_new = state.k + result.x / w
    k_new[result.clamp == 1] = k_c[result.clamp == 1]
    k_new[result.clamp == -1] = -k_c[result.clamp == -1]

    new_i = np.zeros(layout.n_strips)
    np.add.at(new_i, groups, k_new * w)

    rep = result.report
    report = StepReport(
        kkt_residual=rep.kkt_residual,
        stationarity=rep.stationarity,
        sign_violation=rep.sign_violation,
        transport_residual=float(np.abs(new_i - i_target).max(initial=0.0)),
        k_over_kc=float(np.max(np.abs(k_new) / k_c)),
        objective=rep.objective,
        objective_start=rep.objective_start,
        n_iterations=rep.n_iterations,
        n_clamped=int(np.count_nonzero(result.clamp)),
    )
    if report.transport_residual > 1e-9:
        raise SolverError(
            f"transport residual {report.transport_residual:.3e} A exceeds "
            f"1e-9 A", report)

    new_state = CriticalState(k=k_new, a_ext_baseline=state.a_ext_baseline.copy(),
                              i_wire=i_target.copy(), superconducting=True)
    return new_state, report


def transport_currents(layout: ChipLayout, k: np.ndarray) -> np.ndarray:
    """Per-strip net current sum_i k_i w_i (A)."""
    out = np.zeros(layout.n_strips)
    np.add.at(out, layout.strip_index, np.asarray(k) * layout.widths)
    return out


def active_elements(layout: ChipLayout, k: np.ndarray,
                    eps_rel: float = 1e-6) -> np.ndarray:
    """Boolean mask of elements at the critical density, |k| >= K_C (1 - eps)."""
    return np.abs(np.asarray(k)) >= layout.k_c * (1.0 - eps_rel)


def dump_k_profiles(path, layout: ChipLayout, profiles,
                    eps_rel: float = 1e-6) -> None:
    """Write sheet-current profiles as CSV with columns (step, element
    index, z center um, K A/m, active flag).  `profiles` is a sequence of
    k arrays or of (step, k) pairs; explicit step numbers keep endpoint
    identities when some entries of a sweep are missing."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "element", "z_um", "k_A_per_m", "active"])
        for default_idx, entry in enumerate(profiles):
            if isinstance(entry, tuple):
                step_idx, k = entry
            else:
                step_idx, k = default_idx, entry
            act = active_elements(layout, k, eps_rel)
            for i in range(layout.n_elements):
                writer.writerow([step_idx, i,
                                 f"{layout.z_centers[i] * 1e6:.6f}",
                                 f"{k[i]:.10e}", int(act[i])])
