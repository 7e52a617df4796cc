import numpy as np
import pytest

import tapdoe as td
from tapdoe.reactor import SolverOptions

FREE_SUBSET = ("dG0", "dG1", "Ga1", "dG2", "Ga3", "Ga4", "Ga5")


@pytest.fixture(scope="session")
def mech1():
    return td.load_fixture_mechanism(1)


@pytest.fixture(scope="session")
def mech2():
    return td.load_fixture_mechanism(2)


@pytest.fixture(scope="session")
def mech3():
    return td.load_fixture_mechanism(3)


@pytest.fixture(scope="session")
def geometry():
    return td.ReactorGeometry()


@pytest.fixture(scope="session")
def fast_solver():
    """Coarse grid for unit tests that need simulations but not accuracy."""
    return SolverOptions(nodes=48, dt=5e-3)


@pytest.fixture(scope="session")
def exp1_design():
    return td.design(700.0, C3H8=(1.0, 0.0), O2=(1.0, 0.0))


@pytest.fixture
def inert_mechanism():
    """One inert gas plus a formal surface step among undetectable species."""
    text = """
[gas]
Ar mass=40.0
X mass=30.0
[site]
* conc=0.3
[adsorbate]
X* site=*
[steps]
X + * <-> X* : dG=-0.5 Ga=0.8
"""
    return td.parse_mechanism(text, name="inertish")
