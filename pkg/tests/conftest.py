import math

import pytest

from services.fixed_point_service import find_roots, select_root
from services.measure_service import resolve_gibbs_measure
from services.model_service import make_model
from services.spectral_engine import build_system

SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="session")
def ou_model():
    return make_model("oubaseline", 0.0, SQRT2)


@pytest.fixture(scope="session")
def ou_measure(ou_model):
    # standard Gaussian
    return resolve_gibbs_measure(ou_model, 0.0)


@pytest.fixture(scope="session")
def gauss_cos():
    return make_model("gausscos1d", 1.0, SQRT2)


@pytest.fixture(scope="session")
def gauss_cos_root(gauss_cos):
    return find_roots(gauss_cos, (-1.0, 1.0)).roots[0].m


@pytest.fixture(scope="session")
def gauss_cos_system(gauss_cos, gauss_cos_root):
    return build_system(gauss_cos, gauss_cos_root, 40)


@pytest.fixture(scope="session")
def dawson():
    return make_model("dawson", 1.0, 0.5)


@pytest.fixture(scope="session")
def dawson_roots(dawson):
    return find_roots(dawson, (-3.0, 3.0))


@pytest.fixture(scope="session")
def dawson_plus(dawson_roots):
    return select_root(dawson_roots, "plus").m
