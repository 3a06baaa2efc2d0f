import numpy as np
import pytest

FIG2_MUS = np.radians([-45.0, 0.0, 45.0])
FIG2_KAPPAS = np.array([20.0, 20.0, 20.0])
FIG2_WEIGHTS = np.array([0.25, 0.5, 0.25])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def fig2():
    from dirprim import VonMisesMixture

    return VonMisesMixture(FIG2_MUS, FIG2_KAPPAS, FIG2_WEIGHTS)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
