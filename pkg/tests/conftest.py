import numpy as np
import pytest

from handsoff.model import PlantModel

VERDICTS = []


def record(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture
def double_integrator():
    return PlantModel([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]])


@pytest.fixture
def oscillator():
    return PlantModel([[0.0, 1.0], [-1.0, 0.0]], [[0.0], [1.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
