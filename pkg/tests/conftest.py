"""Shared fixtures and the acceptance-summary hook.

The three bundled trajectory sweeps cost ~10 s each, so each runs at most
once per pytest session; every test that needs one shares the cached result
(together with its wall time and parsed configuration).
"""

import time
from dataclasses import replace

import pytest

from beantrap import protocol
from beantrap.config import load_config, shipped_config_path

ACCEPTANCE_LINES = []


def record_criterion(number: int, ok: bool, detail: str) -> bool:
    """One pass/fail line per acceptance criterion, echoed at session end."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


class SweepRun:
    """A shipped configuration executed once: config, result, wall seconds."""

    def __init__(self, name: str):
        self.name = name
        self.config = load_config(shipped_config_path(name))
        t0 = time.perf_counter()
        self.result = protocol.run(self.config.protocol, self.config.solver,
                                   trap_options=self.config.trap)
        self.wall_s = time.perf_counter() - t0


@pytest.fixture(scope="session")
def traj1():
    return SweepRun("trajectory1")


@pytest.fixture(scope="session")
def cool0():
    return SweepRun("trajectory2_cool0G")


@pytest.fixture(scope="session")
def coolm3():
    return SweepRun("trajectory2_coolm3G")


@pytest.fixture(scope="session")
def all_sweeps(traj1, cool0, coolm3):
    return [traj1, cool0, coolm3]


def doubled_substeps(prot):
    """Same protocol with every stage's substep count doubled (stages using
    the solver default are handled by doubling substeps_default alongside)."""
    stages = tuple(
        replace(s, substeps=2 * s.substeps)
        if getattr(s, "substeps", None) is not None else s
        for s in prot.stages)
    return replace(prot, stages=stages)


def without_mot(prot):
    """Drop the placeholder MOT stages (labels starting with 'mot')."""
    stages = tuple(s for s in prot.stages
                   if not getattr(s, "label", "").startswith("mot"))
    return replace(prot, stages=stages)
