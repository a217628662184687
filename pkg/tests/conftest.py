import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import synth  # noqa: E402
from makeuplab import stdmesh  # noqa: E402


@pytest.fixture(scope="session")
def std_setup():
    """(bare standard texture, canonical landmarks, canonical topology)."""
    return synth.standard_setup(160)


@pytest.fixture(scope="session")
def std_landmarks():
    return stdmesh.standard_landmarks()


@pytest.fixture(scope="session")
def std_topology():
    return stdmesh.standard_topology()


@pytest.fixture(scope="session")
def portrait_a():
    lms = synth.identity_landmarks(201)
    img, mask = synth.render_portrait(lms)
    return img, mask, lms


@pytest.fixture(scope="session")
def portrait_b():
    lms = synth.identity_landmarks(202)
    img, mask = synth.render_portrait(lms)
    return img, mask, lms
