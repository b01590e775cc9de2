import numpy as np
import pytest

from services.model_service import ModelName, audit_dissipativity, make_model
from utils.errors import CatalogError, DomainError

ONE_D = ["dawson", "gausscos1d", "subgaussian", "oubaseline"]


def test_parse_model_names():
    assert ModelName.parse("GaussCos1D") is ModelName.GAUSS_COS_1D
    assert ModelName.parse("ou_baseline") is ModelName.OU_BASELINE
    assert ModelName.parse("Sub-Gaussian") is ModelName.SUB_GAUSSIAN
    with pytest.raises(CatalogError):
        ModelName.parse("kuramoto")


def test_make_model_rejects_bad_parameters():
    with pytest.raises(DomainError):
        make_model("dawson", 1.0, 0.0)
    with pytest.raises(DomainError):
        make_model("dawson", float("nan"), 1.0)


def test_ou_baseline_forces_beta_zero():
    model = make_model("oubaseline", 3.0, 1.0)
    assert model.beta == 0.0
    x = np.linspace(-2, 2, 9)
    assert np.allclose(model.drift(x, 0.7), -x)


def test_gauss_cos_without_interaction_is_ou():
    model = make_model("gausscos1d", 0.0, np.sqrt(2.0))
    x = np.linspace(-3, 3, 13)
    for s in (-1.0, 0.0, 0.4):
        assert np.array_equal(model.drift(x, s), -x)


def test_dawson_drift_is_odd():
    model = make_model("dawson", 1.0, 0.5)
    assert model.drift(0.0, 0.0) == 0.0
    x = np.linspace(-2, 2, 17)
    assert np.array_equal(model.drift(-x, -0.3), -model.drift(x, 0.3))


def test_dawson_kernel():
    model = make_model("dawson", 2.0, 0.5)
    z = np.linspace(-1, 1, 5)
    assert np.allclose(model.dfkernel(np.zeros_like(z), z, 0.25), 2.0 * (z - 0.25))


@pytest.mark.parametrize("name", ONE_D)
def test_drift_is_gradient_of_gibbs_logdensity(name):
    # dX = b dt + sigma dB is reversible w.r.t. exp(2/sigma^2 int b)
    model = make_model(name, 1.0, 0.7)
    x = np.linspace(-2.5, 2.5, 41)
    h = 1e-5
    s = 0.3
    grad = (model.confinement_logdensity(x + h, s) - model.confinement_logdensity(x - h, s)) / (2 * h)
    assert np.allclose(0.5 * model.sigma ** 2 * grad, model.drift(x, s), atol=1e-6)


@pytest.mark.parametrize("name", ONE_D)
def test_drift_dx_matches_finite_difference(name):
    model = make_model(name, 1.5, 0.5)
    x = np.linspace(-2, 2, 21)
    h = 1e-6
    numeric = (model.drift(x + h, 0.2) - model.drift(x - h, 0.2)) / (2 * h)
    assert np.allclose(model.drift_dx(x, 0.2), numeric, atol=1e-5)


@pytest.mark.parametrize("name", ONE_D + ["gausscos2d"])
def test_dfkernel_factorizes(name):
    model = make_model(name, 1.2, 0.8)
    rng = np.random.default_rng(3)
    if model.dim == 2:
        x, z, s = rng.normal(size=(6, 2)), rng.normal(size=(6, 2)), np.array([0.1, -0.2])
    else:
        x, z, s = rng.normal(size=6), rng.normal(size=6), 0.1
    expected = model.grad_weight(x) * model.kernel_profile(z, s)
    assert np.allclose(model.dfkernel(x, z, s), expected)


def test_gauss_cos_2d_cross_coupling():
    model = make_model("gausscos2d", 1.0, np.sqrt(2.0))
    x = np.array([[0.0, 0.0], [1.0, -1.0]])
    drift = model.drift(x, np.array([0.2, 0.5]))
    assert np.allclose(drift[:, 0], -x[:, 0] + 0.5)
    assert np.allclose(drift[:, 1], -x[:, 1] + 0.2)


def test_audit_ou_and_gauss_cos():
    ou = audit_dissipativity(make_model("oubaseline", 0.0, np.sqrt(2.0)), 10.0, 2001)
    assert ou["success"]
    assert abs(ou["max_directional_derivative"] + 1.0) < 1e-5
    gc = audit_dissipativity(make_model("gausscos1d", 2.0, np.sqrt(2.0)), 10.0, 2001, s=0.3)
    assert abs(gc["max_directional_derivative"] + 1.0) < 1e-5


def test_audit_dawson_peaks_at_origin():
    report = audit_dissipativity(make_model("dawson", 1.0, 0.5), 10.0, 2001)
    assert abs(report["max_directional_derivative"] - 0.0) < 1e-6
    assert abs(report["argmax"]) < 1e-9
    assert report["negative_outside_unit"]


def test_audit_two_dimensional():
    report = audit_dissipativity(make_model("gausscos2d", 1.0, np.sqrt(2.0)), 3.0, 31, s=np.array([0.5, 0.5]))
    assert abs(report["max_directional_derivative"] + 1.0) < 1e-5


def test_audit_rejects_bad_arguments():
    report = audit_dissipativity(make_model("dawson", 1.0, 0.5), -1.0, 100)
    assert not report["success"]
    assert report["error"]
