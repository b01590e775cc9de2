import math

import numpy as np
import pytest

from services.rate_fit import fit_exponential
from services.semigroup_service import decay_rate, duhamel_residual, evolve, invariance_check
from services.spectral_engine import build_system, mode_gap, spectrum
from utils.errors import DomainError, InsufficientDataError


@pytest.fixture(scope="module")
def ou_system(ou_model):
    return build_system(ou_model, 0.0, 12)


def unit(size, index):
    f = np.zeros(size)
    f[index] = 1.0
    return f


def test_constant_function_is_invariant(gauss_cos_system):
    n = gauss_cos_system.L.shape[0]
    traj = evolve(gauss_cos_system.L, gauss_cos_system.A, unit(n, 0), np.linspace(0, 3, 31))
    assert np.allclose(traj.coeffs, unit(n, 0), atol=1e-10)
    assert np.max(traj.l2_norms) < 1e-10
    assert invariance_check(traj, 1.0) < 1e-12


def test_ou_first_mode_decays_like_exp(ou_system):
    times = np.linspace(0, 5, 51)
    n = ou_system.L.shape[0]
    traj = evolve(ou_system.L, ou_system.A, unit(n, 1), times)
    assert traj.method == "expm-step"
    assert np.allclose(traj.coeffs[:, 1], np.exp(-times), atol=1e-8)
    assert abs(traj.l2_norms[0] - 1.0) < 1e-10


@pytest.mark.parametrize("method", ["expm", "expm-step", "rk45"])
def test_methods_agree(gauss_cos_system, method):
    n = gauss_cos_system.L.shape[0]
    f = unit(n, 1) + 0.5 * unit(n, 2)
    times = np.linspace(0, 2, 9)
    reference = evolve(gauss_cos_system.L, gauss_cos_system.A, f, times, method="expm")
    other = evolve(gauss_cos_system.L, gauss_cos_system.A, f, times, method=method)
    assert np.allclose(other.coeffs, reference.coeffs, atol=1e-8)


def test_auto_method_selection(ou_system):
    n = ou_system.L.shape[0]
    f = unit(n, 1)
    assert evolve(ou_system.L, ou_system.A, f, [0.0, 1.0, 2.0]).method == "expm"
    assert evolve(ou_system.L, ou_system.A, f, np.linspace(0, 1, 20)).method == "expm-step"
    assert evolve(ou_system.L, ou_system.A, f, np.geomspace(1e-3, 1, 20) - 1e-3).method == "rk45"


def test_evolve_rejects_bad_input(ou_system):
    n = ou_system.L.shape[0]
    with pytest.raises(DomainError):
        evolve(ou_system.L, ou_system.A, unit(n, 1), [0.5, 1.0])
    with pytest.raises(DomainError):
        evolve(ou_system.L, ou_system.A, unit(n, 1), [0.0, 1.0, 1.0])
    with pytest.raises(DomainError):
        evolve(ou_system.L, ou_system.A, np.ones(n + 1), [0.0, 1.0])
    with pytest.raises(DomainError):
        evolve(ou_system.L, ou_system.A, unit(n, 1), [0.0, 1.0], method="euler")


def test_trajectory_is_immutable(ou_system):
    traj = evolve(ou_system.L, ou_system.A, unit(ou_system.L.shape[0], 1), [0.0, 1.0])
    with pytest.raises(ValueError):
        traj.coeffs[0, 0] = 2.0


def test_duhamel_without_perturbation_is_exact(ou_system):
    n = ou_system.L.shape[0]
    residual = duhamel_residual(ou_system.L, np.zeros((n, n)), unit(n, 1) + unit(n, 3), 1.0, 8)
    assert residual < 1e-12


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_duhamel_residual_gauss_cos(gauss_cos_system, t):
    n = gauss_cos_system.L.shape[0]
    assert duhamel_residual(gauss_cos_system.L, gauss_cos_system.A, unit(n, 1), t, 64) < 1e-8


@pytest.fixture(scope="module")
def dawson_system(dawson, dawson_plus):
    return build_system(dawson, dawson_plus, 30)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_duhamel_residual_dawson(dawson_system, t):
    n = dawson_system.L.shape[0]
    assert duhamel_residual(dawson_system.L, dawson_system.A, unit(n, 1), t, 64) < 1e-8


def test_dawson_mean_is_invariant(dawson_system):
    n = dawson_system.L.shape[0]
    traj = evolve(dawson_system.L, dawson_system.A, unit(n, 1), np.linspace(0, 6, 121))
    assert invariance_check(traj, 0.0) < 1e-8


def test_sub_panels_shrink_the_residual(dawson_system):
    L, A = dawson_system.L, dawson_system.A
    f = unit(L.shape[0], 1)
    plain = duhamel_residual(L, A, f, 2.0, 64, panels=1)
    refined = duhamel_residual(L, A, f, 2.0, 64)
    assert refined < plain / 50.0
    with pytest.raises(DomainError):
        duhamel_residual(L, A, f, 2.0, 64, panels=0)


def test_duhamel_fourth_order(gauss_cos_system):
    L, A = gauss_cos_system.L, gauss_cos_system.A
    f = unit(L.shape[0], 1)
    # one Simpson interval per substep, so the substep count is the whole rule
    coarse = duhamel_residual(L, A, f, 1.0, 32, panels=1)
    fine = duhamel_residual(L, A, f, 1.0, 64, panels=1)
    assert coarse > 1e-12
    assert fine / coarse <= 1.0 / 15.0 + 1e-3


def test_duhamel_rejects_bad_substeps(ou_system):
    n = ou_system.L.shape[0]
    with pytest.raises(DomainError):
        duhamel_residual(ou_system.L, ou_system.A, unit(n, 1), 1.0, 9)
    with pytest.raises(DomainError):
        duhamel_residual(ou_system.L, ou_system.A, unit(n, 1), 0.0, 16)


def test_invariance_detects_corrupted_perturbation(gauss_cos_system):
    n = gauss_cos_system.L.shape[0]
    f = unit(n, 1)
    times = np.linspace(0, 4, 41)
    good = evolve(gauss_cos_system.L, gauss_cos_system.A, f, times)
    assert invariance_check(good, 0.0) < 1e-8

    corrupted = np.array(gauss_cos_system.A)
    corrupted[0, 1] = 0.2
    bad = evolve(gauss_cos_system.L, corrupted, f, times)
    drift = np.abs(bad.coeffs[:, 0])
    assert invariance_check(bad, 0.0) > 1e-3
    assert drift[20] > drift[5]


def test_ou_decay_rate(ou_system):
    n = ou_system.L.shape[0]
    traj = evolve(ou_system.L, ou_system.A, unit(n, 1), np.linspace(0, 5, 101))
    fit = decay_rate(traj, (1.0, 5.0))
    assert abs(fit.rate - 1.0) < 1e-6
    assert fit.r_squared > 1 - 1e-10


def test_gauss_cos_decay_rate_matches_spectrum(gauss_cos_system):
    report = spectrum(gauss_cos_system.L, gauss_cos_system.A)
    n = gauss_cos_system.L.shape[0]
    # mean-zero mix of the two slowest modes; fit after the faster one has died out
    f = unit(n, 1) + 0.3 * unit(n, 2)
    start = max(2.0, 5.0 / mode_gap(report))
    traj = evolve(gauss_cos_system.L, gauss_cos_system.A, f, np.linspace(0, start + 6.0, 401))
    fit = decay_rate(traj, (start, start + 6.0))
    assert abs(fit.rate - report.lambda_Q) < 1e-3


def test_decay_rate_window_outside_span(ou_system):
    traj = evolve(ou_system.L, ou_system.A, unit(ou_system.L.shape[0], 1), np.linspace(0, 2, 21))
    with pytest.raises(DomainError):
        decay_rate(traj, (1.0, 3.0))


def test_fit_exponential_needs_points():
    t = np.linspace(0, 1, 11)
    with pytest.raises(InsufficientDataError):
        fit_exponential(t, np.exp(-t), (0.0, 0.25))
    fit = fit_exponential(t, 3.0 * np.exp(-2.0 * t), (0.0, 1.0))
    assert abs(fit.rate - 2.0) < 1e-12
    assert abs(fit.log_prefactor - math.log(3.0)) < 1e-12
    assert fit.points == 11
