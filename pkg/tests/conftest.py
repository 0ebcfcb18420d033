from __future__ import annotations

import pytest

from fastgate.ion_chain import TrapConfig, normal_modes
from fastgate.optimizer import OptimizationSpec, optimize_gate, sweep_pairs


@pytest.fixture(scope="session")
def modes2():
    return normal_modes(TrapConfig.for_ions(2))


@pytest.fixture(scope="session")
def modes3():
    return normal_modes(TrapConfig.for_ions(3))


@pytest.fixture(scope="session")
def gate2(modes2):
    """Optimised n=2 gate on the two-ion trap."""
    return optimize_gate(modes2.config, modes2, OptimizationSpec(n=2))


@pytest.fixture(scope="session")
def pairs3(modes3):
    """Optimised n=2 gates on both pairs of the three-ion trap."""
    return sweep_pairs(modes3.config, 2, modes3)


ACCEPTANCE_LINES: dict = {}


def record_acceptance(key: str, passed: bool, detail: str):
    line = f"{key} {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES[key] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[1:])):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
