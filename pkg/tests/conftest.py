import numpy as np
import pytest

from rothe_pns.elements import ElementFamily, build_space
from rothe_pns.mesh import build_rectangle_mesh

FAMILIES = list(ElementFamily)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_square():
    return build_rectangle_mesh(0.0, 0.0, 1.0, 1.0, 1, 1)


@pytest.fixture
def eight_cells():
    return build_rectangle_mesh(-1.0, -1.0, 1.0, 1.0, 2, 2)


@pytest.fixture(params=FAMILIES, ids=lambda f: f.value)
def family(request):
    return request.param


@pytest.fixture
def small_space(eight_cells, family):
    return build_space(eight_cells, family)
