"""Shared fixtures: generated clips are built once per session."""

import os

import numpy as np
import pytest

from flowpriors.fields.dense import Grid
from flowpriors.kinematics import default_mass_profile, default_skeleton
from flowpriors.priors.types import Tolerances
from flowpriors.synthbench import generate_scene

RUN_SLOW = os.getenv("HFLOW_RUN_SLOW") == "1"


def pytest_collection_modifyitems(config, items):
    if RUN_SLOW:
        return
    skip_slow = pytest.mark.skip(reason="slow run; set HFLOW_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def skeleton():
    return default_skeleton()


@pytest.fixture(scope="session")
def mass():
    return default_mass_profile()


@pytest.fixture(scope="session")
def tol():
    return Tolerances()


@pytest.fixture(scope="session")
def grid128():
    return Grid(128, 128)


@pytest.fixture(scope="session")
def walk_clip(grid128):
    return generate_scene("walk", grid128, 16, seed=7)


@pytest.fixture(scope="session")
def idle_clip(grid128):
    return generate_scene("idle", grid128, 16, seed=7)


@pytest.fixture(scope="session")
def swing_clip(grid128):
    return generate_scene("swing", grid128, 16, seed=7)


@pytest.fixture(scope="session")
def small_walk_clip():
    return generate_scene("walk", Grid(48, 48), 6, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
