import numpy as np
import pytest

from fkpath.catalog import m2
from fkpath.models import FiniteCtmcModel, InitialLaw

# reference values for M2 (L = [[-1, 1], [2, -2]], V = (0, 1), X_0 = 0), computed
# with mpmath.expm at 30 digits, independently of the package oracle
M2_GAMMA_1 = np.array([0.60835429364153016927, 0.21390913026027934800])
M2_Z_1 = 0.82226342390180951728
M2_ETA_1 = M2_GAMMA_1 / M2_Z_1
M2_GAMMA_HALF = np.array([0.72248483277735143018, 0.20780996132068923249])
M2_H2_Q = 0.30130337869536206742
M2_RHO_H1 = 0.92713330696221037925
M2_P1 = np.array([[0.68326235612262131433, 0.31673764387737868567],
                  [0.63347528775475737135, 0.36652471224524262865]])
# Q_1(int_0^1 1{x_s = 1} ds) from the block-matrix exponential [[A, E], [0, A]]
M2_OCCUPATION_1 = 1.0 / 6.0
JARZYNSKI_RATIO = 0.68393972058572116080


@pytest.fixture(scope="session")
def m2_bundle():
    return m2()


@pytest.fixture(scope="session")
def m2_model(m2_bundle):
    return m2_bundle.model


@pytest.fixture(scope="session")
def m2_init(m2_bundle):
    return m2_bundle.initial


@pytest.fixture(scope="session")
def free_model():
    """M2 rates with V identically 0."""
    return FiniteCtmcModel.homogeneous([[-1.0, 1.0], [2.0, -2.0]], [0.0, 0.0], name="m2-free")


@pytest.fixture(scope="session")
def dirac0():
    return InitialLaw.dirac(0)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
