import sys
from importlib import resources
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from shootpss.netlist import parse_netlist  # noqa: E402
from shootpss.shooting import PssOptions, shoot_autonomous  # noqa: E402


def bundled_text(name):
    return resources.files("shootpss").joinpath("circuits", name).read_text()


def bundled_path(name):
    return str(resources.files("shootpss").joinpath("circuits", name))


@pytest.fixture(scope="session")
def vdp():
    return parse_netlist(bundled_text("vdp.cir"))


@pytest.fixture(scope="session")
def linear_rc():
    return parse_netlist(bundled_text("linear_rc.cir"))


@pytest.fixture(scope="session")
def rectifier():
    return parse_netlist(bundled_text("rectifier.cir"))


@pytest.fixture(scope="session")
def vdp_result(vdp):
    card = vdp.card("PSS")
    opts = PssOptions.from_card(card)
    return shoot_autonomous(vdp, card.params["Tper"], card.params["Tstab"], opts)


CRITERIA_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)
