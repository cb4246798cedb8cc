"""Exception types shared across the package."""

from __future__ import annotations


class GeometryError(ValueError):
    """Invalid wire layout (overlaps, bad widths, element tiling problems)."""


class FeasibilityError(ValueError):
    """A requested transport current cannot be carried within |K| <= K_C."""


class SolverError(RuntimeError):
    """The constrained quadratic solve did not converge; carries a residual report."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class SingularPointError(ValueError):
    """Field evaluation requested on (or too close to) a current-carrying film element."""


class ConfigError(ValueError):
    """Run-configuration validation failure; carries (key path, message) diagnostics."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(f"{path}: {msg}" for path, msg in self.diagnostics)
        super().__init__(lines or "invalid configuration")


class ProtocolError(ValueError):
    """Ill-formed control protocol (stage ordering, sweep wiring, missing cool-down)."""
