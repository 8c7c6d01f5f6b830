import sys
from pathlib import Path

import numpy as np
import pytest

from gaussuot import UotProblem

sys.path.insert(0, str(Path(__file__).parent))

from oracles import random_spd  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
PROBLEMS = ROOT / "problems"

# golden values for the one-dimensional reference example
REF_VALUE = 0.395206446101
REF_MASS = 0.767998209416
REF_MIN_EIG_P_INV = 1.125456389751
# golden discrete dual values on the reference grid, n = 21, 31, 41, 51
REF_GRID_DUALS = {21: 0.450038701591, 31: 0.417954908724, 41: 0.408804277024, 51: 0.404012774659}


def reference_1d() -> UotProblem:
    return UotProblem.from_arrays(1.0, [0.2], [[1.1**2]], 0.8, [1.3], [[0.7**2]], 1.4, 2.2)


def noncommuting_2d() -> UotProblem:
    return UotProblem.from_arrays(
        1.2, [0.0, 0.5], [[1.0, 0.3], [0.3, 0.5]],
        0.9, [1.0, -0.3], [[0.6, -0.2], [-0.2, 1.2]],
        1.0, 1.5,
    )


def random_problem(rng, d, mass_range=(0.3, 3.0), tau_range=(0.3, 4.0)) -> UotProblem:
    return UotProblem.from_arrays(
        rng.uniform(*mass_range), rng.normal(size=d), random_spd(rng, d),
        rng.uniform(*mass_range), rng.normal(size=d), random_spd(rng, d),
        rng.uniform(*tau_range), rng.uniform(*tau_range),
    )


@pytest.fixture
def ref_problem():
    return reference_1d()


@pytest.fixture
def problem_2d():
    return noncommuting_2d()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
