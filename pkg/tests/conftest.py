import math

import numpy as np
import pytest

import config
from MixTrace.core.geo import EARTH_RADIUS_M
from MixTrace.core.trace import Dataset, Trace
from MixTrace.utils.synthgen import SynthConfig, generate

DEG_M = math.pi * EARTH_RADIUS_M / 180.0


def line_trace(label, start, end, t0, t1, n):
    """Straight lat/lon-linear trace from start to end, n evenly timed points."""
    return Trace(
        label,
        np.linspace(t0, t1, n),
        np.linspace(start[0], end[0], n),
        np.linspace(start[1], end[1], n),
    )


def keyframe_trace(label, keys, t):
    """Trace sampled at times t along keyframes [(t, lat, lon), ...]."""
    kt, klat, klon = (np.array(col, dtype=float) for col in zip(*keys))
    t = np.asarray(t, dtype=float)
    return Trace(label, t, np.interp(t, kt, klat), np.interp(t, kt, klon))


@pytest.fixture(autouse=True)
def _fresh_autoclean():
    config.autoclean.clear()
    yield
    config.autoclean.clear()


@pytest.fixture
def stop_trace():
    # 600 s dwell at the origin, then a 1111.95 m hop east
    return Trace("stop", [0.0, 600.0, 700.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.01])


@pytest.fixture
def crossing():
    """A east along the equator, B north across it; both at (0, 0.01) at t=1000."""
    return Dataset.from_traces(
        [
            line_trace("A", (0.0, 0.0), (0.0, 0.02), 0.0, 2000.0, 201),
            line_trace("B", (-0.01, 0.01), (0.01, 0.01), 0.0, 2000.0, 201),
        ]
    )


@pytest.fixture
def mirror_crossing():
    """A from the west and B from the east pause together at (0, 0.01), then
    leave north and south. Seen from either entry, both exits look alike."""
    t = np.arange(0.0, 2001.0, 20.0)
    a = keyframe_trace("A", [(0, 0.0, 0.0), (900, 0.0, 0.01), (1100, 0.0, 0.01), (2000, 0.01, 0.01)], t)
    b = keyframe_trace("B", [(0, 0.0, 0.02), (900, 0.0, 0.01), (1100, 0.0, 0.01), (2000, -0.01, 0.01)], t)
    return Dataset.from_traces([a, b])


@pytest.fixture(scope="session")
def standard_fixture():
    """20 users with 3 planted POIs each, no planted meetings."""
    return generate(SynthConfig(seed=7))


@pytest.fixture(scope="session")
def meeting_fixture():
    return generate(SynthConfig(n_users=6, n_planted_meetings=2, seed=11))
