import math

import pytest

from cone_spectra.geometry import EuclideanFactor, ProductOfSpheres, RoundLink, build_cone
from cone_spectra.skin import skin_closed_form

S_HAT = math.sqrt(6.0) + 1.0  # r * s_1 on the cones with |A_link|^2 = 6


@pytest.fixture(scope="session")
def simons():
    return build_cone(ProductOfSpheres(3, 3))


@pytest.fixture(scope="session")
def simons_skin(simons):
    return skin_closed_form(simons, 1.0)


@pytest.fixture(scope="session")
def factor():
    return build_cone(EuclideanFactor(1, ProductOfSpheres(3, 3)))


@pytest.fixture(scope="session")
def factor_skin(factor):
    return skin_closed_form(factor, 1.0)


@pytest.fixture(scope="session")
def flat():
    return build_cone(RoundLink(6))


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
