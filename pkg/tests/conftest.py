import numpy as np
import pytest

from hydroscale.models import build_model
from hydroscale.stochastics import CovarianceSpec


@pytest.fixture(scope="session")
def shell():
    return build_model("shell")


@pytest.fixture(scope="session")
def shell_free():
    """Unforced, undamped shell model: no noise, no reaction."""
    return build_model("shell", noise_gains=0.0, reaction="none")


@pytest.fixture(scope="session")
def ou():
    return build_model("ou")


@pytest.fixture(scope="session")
def ns_small():
    return build_model("ns2d", max_wavenumber=3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def shell_cov(shell):
    return CovarianceSpec.power_law(shell.noise_dim)


@pytest.fixture(scope="session")
def ou_cov():
    return CovarianceSpec.uniform(1)


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one verdict line per acceptance criterion; printed after the run."""

    def report(number, title, ok, detail):
        line = f"CRITERION {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
