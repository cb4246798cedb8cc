"""Hysteretic screening currents and magnetic microtraps for thin-film
superconducting chip wires.

The film is modeled as parallel strips of elements carrying sheet current
density K(z) limited by |K| <= K_C.  Every drive change (perpendicular bias
field or wire transport current) advances the state through a constrained
energy minimization, which makes the current distribution history dependent:
trap positions depend on the path taken, not just the present drive.
"""

from .bean import (CriticalState, InductanceOperator, StepInput, StepReport,
                   build_inductance, external_potential, field_cool,
                   normal_state, step, step_detailed, transition_to_normal)
from .errors import (ConfigError, FeasibilityError, GeometryError,
                     ProtocolError, SingularPointError, SolverError)
from .geometry import ChipLayout, Strip, build_layout, default_chip_layout
from .magnetics import (BiasField, FieldMap, GridSpec, field_at, field_grid,
                        field_map, sheet_field)
from .oracle import AnalyticCase, b_char, critical_current, element_average, \
    front_position, profile
from .protocol import (ControlProtocol, FieldCool, Hold, Ramp, RunResult,
                       SetNormal, SolverOptions, SweepSpec, run,
                       trajectory_rows, track_wells, write_trajectory_csv)
from .trap import (Minimum, Saddle, TrapOptions, TrapParams, TrapScan, Window,
                   analyze_trap, equipotential_contours, find_minima,
                   find_saddle, potential_at, potential_grid)
from .units import GAUSS, MU0, MUB_OVER_KB, UM

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # geometry
    "Strip", "ChipLayout", "build_layout", "default_chip_layout",
    # critical state
    "CriticalState", "InductanceOperator", "StepInput", "StepReport",
    "build_inductance", "external_potential", "field_cool", "normal_state",
    "step", "step_detailed", "transition_to_normal",
    # closed-form strip profiles
    "AnalyticCase", "b_char", "critical_current", "element_average",
    "front_position", "profile",
    # fields
    "BiasField", "FieldMap", "GridSpec", "field_at", "field_grid",
    "field_map", "sheet_field",
    # traps
    "Minimum", "Saddle", "TrapOptions", "TrapParams", "TrapScan", "Window",
    "analyze_trap", "equipotential_contours", "find_minima", "find_saddle",
    "potential_at", "potential_grid",
    # protocols
    "ControlProtocol", "FieldCool", "Hold", "Ramp", "RunResult", "SetNormal",
    "SolverOptions", "SweepSpec", "run", "track_wells", "trajectory_rows",
    "write_trajectory_csv",
    # errors
    "ConfigError", "FeasibilityError", "GeometryError", "ProtocolError",
    "SingularPointError", "SolverError",
    # constants
    "GAUSS", "MU0", "MUB_OVER_KB", "UM",
]
