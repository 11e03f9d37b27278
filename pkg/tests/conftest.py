import numpy as np
import pytest

from gridstate.network import Branch, Bus, BusKind, Network, load_case

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ieee14():
    return load_case("ieee14")


@pytest.fixture(scope="session")
def ieee30():
    return load_case("ieee30")


@pytest.fixture(scope="session", params=["ieee14", "ieee30"])
def bundled(request):
    return load_case(request.param)


def make_three_bus() -> Network:
    buses = (
        Bus(1, 110.0, BusKind.SLACK, 1.02, 0.0),
        Bus(2, 110.0, BusKind.PQ, 0.99, -0.04),
        Bus(3, 110.0, BusKind.PQ, 0.97, -0.07, shunt_b=0.05),
    )
    branches = (
        Branch.from_impedance(1, 2, 0.02, 0.08, 0.04),
        Branch.from_impedance(1, 3, 0.03, 0.11, 0.03),
        Branch.from_impedance(2, 3, 0.0, 0.15, 0.0, tap_ratio=0.97),
    )
    return Network(buses, branches, 100.0, "three-bus")


@pytest.fixture
def three_bus():
    net = make_three_bus()
    return net, net.reference_state()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
