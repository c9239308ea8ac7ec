from __future__ import annotations

import numpy as np
import pytest

from birthgrowth.families import ConstantSpeed, UniformBox
from birthgrowth.grid import Box
from birthgrowth.growth import GrowthField
from birthgrowth.nucleation import NucleationModel

SQUARE4 = Box((0.0, 0.0), (4.0, 4.0))


@pytest.fixture
def unit_speed() -> GrowthField:
    return GrowthField.time_only(ConstantSpeed(1.0), 4.0)


@pytest.fixture
def kjma_model() -> NucleationModel:
    # alpha = 0.5 on a window padded far beyond any cone used in the tests
    return NucleationModel.homogeneous_poisson(0.5, Box((-4.0, -4.0), (8.0, 8.0)))


def staircase_model(window: Box = Box((-3.0, -3.0), (7.0, 7.0))) -> NucleationModel:
    from birthgrowth.families import Exponential

    return NucleationModel.staircase(Exponential(1.0), UniformBox(SQUARE4), window)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
