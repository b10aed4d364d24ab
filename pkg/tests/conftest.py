import numpy as np
import pytest

from spinguide.analytic import FreeGaussianSpinor, GaussianComponent
from spinguide.su2 import RotatorParams

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, title: str, ok: bool, detail: str = "") -> None:
    """Print and remember one PASS/FAIL line for the acceptance summary."""
    line = f"criterion {criterion:2d} {'PASS' if ok else 'FAIL'} {title}"
    if detail:
        line += f" | {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def params():
    return RotatorParams(m=1.0, I=0.5, mm=1.0, hbar=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def superposition(params):
    """Two offset Gaussian components with different momenta: not factorized."""
    c1 = GaussianComponent(0.8, (0.2, 0.0, 0.0), (1.0, 1.0, 1.0), (0.7, 0.0, 0.0))
    c2 = GaussianComponent(0.6j, (-0.3, 0.0, 0.0), (0.8, 1.0, 1.0), (-0.4, 0.0, 0.0))
    return FreeGaussianSpinor((c1, c2), params)


@pytest.fixture
def spin_up(params):
    return FreeGaussianSpinor.polarized((1, 0), sigma=(1.0, 1, 1), k=(0.5, 0, 0), params=params)
