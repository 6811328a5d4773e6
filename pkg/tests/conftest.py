import numpy as np
import pytest

from bgs import build_rectangle_mesh, build_spaces


@pytest.fixture(scope="session")
def spaces_2x2():
    return build_spaces(build_rectangle_mesh(2, 2, ("left",)))


@pytest.fixture(scope="session")
def spaces_4x4():
    return build_spaces(build_rectangle_mesh(4, 4, ("left",)))


@pytest.fixture()
def rng():
    return np.random.default_rng(20240719)
