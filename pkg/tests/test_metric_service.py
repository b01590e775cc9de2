import numpy as np
import pytest

from services.metric_service import (
    METRIC_NAMES,
    catalog_metric,
    catalog_summary,
    default_metric,
    metric_pair,
    phi_capped,
    phi_identity,
    v_one,
    v_poly,
    v_subgauss,
    validate_metric,
)
from services.model_service import make_model
from utils.errors import CatalogError, MetricClassError


def test_identity_metric_is_w1():
    spec = validate_metric(phi_identity, v_one)
    assert abs(spec.phi_integral - 1.0) < 1e-10


@pytest.mark.parametrize("p", [1.0, 2.0, 4.5])
def test_capped_phi_with_polynomial_weight(p):
    spec = validate_metric(phi_capped, v_poly(p), name="poly")
    assert abs(spec.phi_integral - 1.0) < 1e-8


def test_subgaussian_weight_is_valid():
    spec = validate_metric(phi_capped, v_subgauss)
    assert np.isfinite(spec.phi_integral)


def test_sqrt_phi_is_valid():
    # phi^2(sqrt(u)) = sqrt(u) is concave and int_0^1 s^{-1/2} ds = 2
    spec = validate_metric(np.sqrt, v_one)
    assert abs(spec.phi_integral - 2.0) < 1e-6


def test_square_phi_fails_concavity():
    with pytest.raises(MetricClassError) as info:
        validate_metric(lambda r: np.asarray(r, dtype=float) ** 2, v_one)
    assert "concavity" in info.value.prop


def test_phi_must_vanish_at_zero():
    with pytest.raises(MetricClassError) as info:
        validate_metric(lambda r: np.asarray(r, dtype=float) + 0.1, v_one)
    assert info.value.prop == "phi(0) = 0"


def test_phi_must_be_nondecreasing():
    with pytest.raises(MetricClassError) as info:
        validate_metric(lambda r: np.minimum(r, 1.0) - 0.5 * np.maximum(np.asarray(r) - 2.0, 0.0), v_one)
    assert "monotonicity" in info.value.prop
    assert info.value.witness > 2.0


def test_weight_must_be_at_least_one():
    with pytest.raises(MetricClassError) as info:
        validate_metric(phi_identity, lambda x: 0.5 + np.asarray(x, dtype=float) ** 2)
    assert info.value.prop == "V >= 1"


def test_non_dini_phi_is_rejected():
    # phi(r) = 1 / (3 - log(r ^ 1)) passes the grid checks but int phi(s)/s ds diverges
    def phi(r):
        r = np.asarray(r, dtype=float)
        safe = np.minimum(np.where(r > 0, r, 1.0), 1.0)
        return np.where(r > 0, 1.0 / (3.0 - np.log(safe)), 0.0)

    with pytest.raises(MetricClassError) as info:
        validate_metric(phi, v_one)
    assert "Dini" in info.value.prop


def test_catalog_lookup():
    assert metric_pair("W1") == (phi_identity, v_one)
    assert set(METRIC_NAMES) == {"w1", "poly", "subgauss"}
    with pytest.raises(CatalogError):
        metric_pair("tv")
    assert catalog_metric("poly", 2.0).name == "poly(p=2)"
    summary = catalog_summary()
    assert set(summary) == set(METRIC_NAMES)


def test_default_metric_per_model():
    assert default_metric(make_model("subgaussian", 1.0, 0.5)).name == "subgauss"
    assert default_metric(make_model("dawson", 1.0, 0.5)).name == "poly(p=1)"
