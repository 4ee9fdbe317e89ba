import numpy as np
import pytest

from hypext.extension import ExtensionSpec, build_extended_symbol
from hypext.models import maxwell_system, toy_mhd_system
from hypext.symbol import Frame


@pytest.fixture(scope="session")
def frame():
    return Frame.standard(4)


@pytest.fixture(scope="session")
def maxwell():
    return maxwell_system()


@pytest.fixture(scope="session")
def mhd():
    return toy_mhd_system()


@pytest.fixture(scope="session")
def maxwell_ext(maxwell):
    return build_extended_symbol(maxwell, ExtensionSpec.cleaning_speeds((1.5, 2.0)))


@pytest.fixture(scope="session")
def mhd_ext(mhd):
    return build_extended_symbol(mhd, ExtensionSpec.cleaning_speeds((1.5,)))


@pytest.fixture
def unit_k():
    return np.array([0.0, 0.6, 0.8, 0.0])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
