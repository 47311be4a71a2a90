from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from minkowski_caps.pipeline import ConstructionConfig, construct, run_sweep  # noqa: E402
from minkowski_caps.profile import PunctureSet, find_equilibrium_weights  # noqa: E402
from minkowski_caps.spherical import E3, tangent_frame, unit  # noqa: E402

FLAGSHIP_N = (4, 8, 16)


def tilted_triple() -> np.ndarray:
    """Three points on a tilted great circle with unequal gaps: a generic equilibrium set."""
    n = unit([0.3, -0.2, 1.0])
    a1, a2 = tangent_frame(n)
    return np.array([math.cos(t) * a1 + math.sin(t) * a2 for t in np.radians([10, 140, 250])])


@pytest.fixture(scope="session")
def flagship_punctures() -> PunctureSet:
    return PunctureSet([E3, -E3], [4.0, 4.0])


@pytest.fixture(scope="session")
def flagship_sweep(flagship_punctures):
    """The level-5 antipodal sweep over n = 4, 8, 16, computed once per session."""
    return run_sweep(ConstructionConfig(flagship_punctures, list(FLAGSHIP_N), grid_level=5))


@pytest.fixture(scope="session")
def triple_body():
    pts = tilted_triple()
    ps = PunctureSet(pts, find_equilibrium_weights(pts))
    return construct(ps, 12, 5)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
