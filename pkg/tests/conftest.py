import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from indefbvp.model import Nonlinearity, ProblemSpec, Weight

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def problem(weight: str, g: str = "s^2", bc: str = "periodic", nu: float = 1.0, T: float = 1.0, **gdecl):
    return ProblemSpec(bc, Weight.from_expr(weight, T), Nonlinearity.from_text(g, **gdecl), nu)


@pytest.fixture
def make_problem():
    return problem


@pytest.fixture
def sine_problem():
    """Periodic pure-power problem with a negative-mean sine weight."""
    return problem("sin(2*pi*x) - 0.3")


@pytest.fixture
def examples_dir(tmp_path):
    return tmp_path


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
