"""Shared fixtures; expensive clearings solve once per session."""

from __future__ import annotations

import warnings

import numpy as np
import pytest

from flexopf import fixtures as fx
from flexopf.clearing import clear_market

warnings.filterwarnings("ignore", message="Solution may be inaccurate")


@pytest.fixture(scope="session")
def four_bus_model():
    return fx.four_bus()

@pytest.fixture(scope="session")
def two_bus_model():
    return fx.two_bus()


@pytest.fixture(scope="session")
def art_4bus_risk():
    return clear_market(fx.four_bus(), fx.four_bus_scenario(horizon=2), tol=1e-10)


@pytest.fixture(scope="session")
def art_4bus_det():
    return clear_market(fx.four_bus(), fx.four_bus_scenario(horizon=2), det=True)


@pytest.fixture(scope="session")
def art_r34_risk():
    return clear_market(fx.ieee34_reduced(), fx.ieee34_reduced_scenario(horizon=2), tol=1e-9)


@pytest.fixture(scope="session")
def art_chance_volt():
    return clear_market(fx.chance_feeder(v_min=0.988), fx.chance_scenario(), tol=1e-9)


@pytest.fixture(scope="session")
def art_chance_flow():
    return clear_market(fx.chance_feeder(s_max_12=1.75), fx.chance_scenario(), tol=1e-9)


@pytest.fixture(scope="session")
def art_pinned():
    return clear_market(fx.pinned_feeder(), fx.pinned_scenario(), tol=1e-10)


_ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def record_acceptance(name: str, detail: str = "") -> None:
    _ACCEPTANCE_RESULTS.append((name, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    reports = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" in nodeid and rep.when == "call":
                reports[nodeid] = status.upper()
    if not reports:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for nodeid in sorted(reports):
        name = nodeid.split("::")[-1]
        terminalreporter.write_line(f"{reports[nodeid]:>6}  {name}")
