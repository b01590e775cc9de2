import math

import numpy as np
import pytest

from config import DEFAULT_SEED
from services.measure_service import gibbs_measure, quantile_grid, resolve_gibbs_measure, sample
from services.metric_service import phi_identity, v_one
from services.model_service import make_model
from services.particle_service import (
    bismut_check,
    bismut_gradient,
    init_ensemble,
    initial_positions,
    one_sample_w1,
    run_and_fit,
    simulate,
    step,
    two_sample_w1,
    w1_to,
    weighted_distance_to,
)
from utils.errors import DivergenceError, DomainError, FitWindowError, NumericError


def test_init_ensemble_rejects_bad_positions():
    with pytest.raises(DomainError):
        init_ensemble(np.zeros((0,)), seed=1)
    with pytest.raises(DomainError):
        init_ensemble(np.zeros((4, 2, 2)), seed=1)
    with pytest.raises(NumericError):
        init_ensemble(np.array([0.0, np.nan]), seed=1)
    ens = init_ensemble(np.zeros(5), seed=3)
    assert ens.size == 5 and ens.dim == 1 and ens.rng_state == (3, 0)


def test_step_matches_simulate(ou_model):
    x0 = np.linspace(-1.0, 1.0, 500)
    ens = init_ensemble(x0, seed=5)
    for _ in range(5):
        ens = step(ens, ou_model, 0.01)
    rec = simulate(ou_model, x0, 0.01, 0.05, seed=5)
    assert ens.step_count == 5
    assert len(ens.stat_history) == 5
    assert np.array_equal(ens.positions, rec.final.positions)


def test_step_continues_simulate(dawson, dawson_plus):
    mu = resolve_gibbs_measure(dawson, dawson_plus)
    x0 = initial_positions(mu, 1000, seed=6, shift=0.05)
    short = simulate(dawson, x0, 0.01, 0.5, seed=6, record_every=0.2)
    assert short.final.step_count == 50
    assert short.final.rng_state == (6, 50)
    resumed = step(short.final, dawson, 0.01)
    longer = simulate(dawson, x0, 0.01, 0.51, seed=6, record_every=0.2)
    assert longer.final.step_count == 51
    assert np.array_equal(resumed.positions, longer.final.positions)


def test_exit_reports_steps_taken(dawson, dawson_plus):
    mu = resolve_gibbs_measure(dawson, dawson_plus)
    x0 = initial_positions(mu, 2000, seed=8)
    rec = simulate(dawson, x0, 0.01, 5.0, seed=8, exit_band=(dawson_plus - 1e-6, dawson_plus + 1e-6))
    assert rec.final.step_count == int(round(rec.exit_time / 0.01))


def test_step_rejects_bad_arguments(ou_model):
    ens = init_ensemble(np.zeros(10), seed=1)
    with pytest.raises(DomainError):
        step(ens, ou_model, 0.2)
    with pytest.raises(DomainError):
        step(ens, ou_model, 0.0)
    with pytest.raises(DomainError):
        step(init_ensemble(np.zeros((10, 2)), seed=1), ou_model, 0.01)


def test_ou_variance_relaxes(ou_model):
    rec = simulate(ou_model, np.zeros(20000), 0.01, 10.0, seed=21, record_every=1.0)
    assert abs(np.var(rec.final.positions) - 1.0) < 0.05
    assert abs(rec.t[-1] - 10.0) < 1e-9


def test_simulation_is_deterministic(dawson, dawson_plus):
    mu = resolve_gibbs_measure(dawson, dawson_plus)
    x0 = initial_positions(mu, 2000, seed=4)
    a = simulate(dawson, x0, 0.01, 1.0, seed=4, record_every=0.1)
    b = simulate(dawson, x0, 0.01, 1.0, seed=4, record_every=0.1)
    c = simulate(dawson, x0, 0.01, 1.0, seed=5, record_every=0.1)
    assert a.stat == b.stat
    assert np.array_equal(a.final.positions, b.final.positions)
    assert not np.array_equal(a.final.positions, c.final.positions)


def test_antithetic_noise_flips_sign(ou_model):
    x0 = np.zeros(100)
    plain = step(init_ensemble(x0, seed=9), ou_model, 0.01)
    flipped = step(init_ensemble(x0, seed=9), ou_model, 0.01, antithetic=True)
    assert np.allclose(plain.positions, -flipped.positions)


def test_w1_on_quantile_grid_is_zero(ou_measure):
    ens = init_ensemble(quantile_grid(ou_measure, 1000), seed=0)
    assert w1_to(ens, ou_measure) == 0.0


@pytest.mark.parametrize("shift", [-0.7, 0.25, 1.5])
def test_w1_of_shifted_grid(ou_measure, shift):
    ens = init_ensemble(quantile_grid(ou_measure, 1000) + shift, seed=0)
    assert abs(w1_to(ens, ou_measure) - abs(shift)) < 1e-12


def test_w1_of_sample_is_small(ou_measure):
    ens = init_ensemble(sample(ou_measure, 100_000, seed=2), seed=0)
    assert w1_to(ens, ou_measure) < 0.01


def test_weighted_distance_reduces_to_w1(ou_measure):
    ens = init_ensemble(sample(ou_measure, 5000, seed=3), seed=0)
    weighted = weighted_distance_to(ens, ou_measure, v_one, phi_identity)
    assert abs(weighted - w1_to(ens, ou_measure)) < 1e-12
    exact = init_ensemble(quantile_grid(ou_measure, 5000), seed=0)
    assert weighted_distance_to(exact, ou_measure, v_one, phi_identity) == 0.0


def test_distances_require_1d_ensemble(ou_measure):
    with pytest.raises(DomainError):
        w1_to(init_ensemble(np.zeros((10, 2)), seed=0), ou_measure)


@pytest.mark.slow
def test_ou_rate_from_shifted_start(ou_model, ou_measure):
    fit, diagnostics = run_and_fit(ou_model, 1.0, 20000, 0.01, 6.0, seed=17, target=ou_measure)
    assert abs(fit.rate - 1.0) < 0.15
    assert fit.r_squared > 0.95
    assert diagnostics["points"] >= 4
    assert abs(diagnostics["d0"] - 1.0) < 1e-9
    assert diagnostics["window_high"] == diagnostics["d0"] / 2


def test_fit_window_failure_reports_diagnostics(ou_model, ou_measure):
    # starting on the target itself leaves nothing between 3 sampling floors and d0/2
    with pytest.raises(FitWindowError) as info:
        run_and_fit(ou_model, 0.0, 1000, 0.05, 1.0, seed=3, target=ou_measure)
    diagnostics = info.value.diagnostics
    assert diagnostics["points"] == 0
    assert diagnostics["d0"] == 0.0
    assert diagnostics["floor"] > 0
    assert diagnostics["window_low"] == 3.0 * diagnostics["sampling_floor"]


def test_sampling_floor_sits_below_two_sample_floor(ou_measure):
    seeds = range(100)
    one = np.mean([one_sample_w1(ou_measure, 2000, seed=s) for s in seeds])
    two = np.mean([two_sample_w1(ou_measure, 2000, seed=s) for s in seeds])
    # about sqrt(2) in expectation
    assert 1.1 < two / one < 1.8
    exact = init_ensemble(quantile_grid(ou_measure, 2000), seed=0)
    assert w1_to(exact, ou_measure) == 0.0


@pytest.mark.slow
def test_gauss_cos_fit_window_has_points(gauss_cos, gauss_cos_root):
    target = resolve_gibbs_measure(gauss_cos, gauss_cos_root)
    fit, diagnostics = run_and_fit(gauss_cos, 0.1, 20000, 0.005, 10.0, seed=DEFAULT_SEED, target=target)
    assert diagnostics["points"] >= 4
    assert diagnostics["window_low"] == 3.0 * diagnostics["sampling_floor"]
    assert diagnostics["sampling_floor"] < diagnostics["floor"]
    assert fit.r_squared > 0.9


def test_run_and_fit_validates_sizes(ou_model, ou_measure):
    with pytest.raises(DomainError):
        run_and_fit(ou_model, 1.0, 500, 0.01, 1.0, seed=1, target=ou_measure)
    with pytest.raises(DomainError):
        run_and_fit(ou_model, 1.0, 2000, 0.01, 0.05, seed=1, target=ou_measure)
    with pytest.raises(DomainError):
        run_and_fit(ou_model, np.zeros(1500), 2000, 0.01, 1.0, seed=1, target=ou_measure)


def test_dawson_stays_near_outer_fixed_point(dawson, dawson_plus):
    mu = resolve_gibbs_measure(dawson, dawson_plus)
    x0 = initial_positions(mu, 5000, seed=8)
    rec = simulate(dawson, x0, 0.01, 10.0, seed=8, record_every=0.5)
    assert max(abs(s - dawson_plus) for s in rec.stat) < 0.05
    assert rec.exit_time is None


def test_exit_band_stops_the_run(dawson, dawson_plus):
    mu = resolve_gibbs_measure(dawson, dawson_plus)
    x0 = initial_positions(mu, 2000, seed=8)
    rec = simulate(dawson, x0, 0.01, 5.0, seed=8, exit_band=(dawson_plus - 1e-6, dawson_plus + 1e-6))
    assert rec.exit_time is not None
    assert rec.exit_time < 5.0
    assert rec.t[-1] == rec.exit_time


def test_divergence_is_detected(dawson):
    with pytest.raises(DivergenceError) as info:
        step(init_ensemble(np.full(1000, 300.0), seed=1), dawson, 0.1)
    assert info.value.time == pytest.approx(0.1)
    tamed = step(init_ensemble(np.full(1000, 300.0), seed=1), dawson, 0.1, tamed=True)
    assert np.max(np.abs(tamed.positions)) < 300.0


def test_simulate_rejects_large_dt(ou_model):
    with pytest.raises(DomainError):
        simulate(ou_model, np.zeros(100), 0.5, 10.0, seed=1)
    with pytest.raises(DomainError):
        simulate(ou_model, np.zeros(100), 0.01, 0.001, seed=1)


def test_record_columns_without_target(ou_model):
    rec = simulate(ou_model, np.zeros(100), 0.01, 0.1, seed=1, record_every=0.1)
    columns = rec.as_columns()
    assert len(columns["t"]) == len(rec.t) == 2
    assert all(math.isnan(v) for v in columns["w1"])
    assert all(math.isnan(v) for v in columns["weighted_ub"])


def test_record_columns_for_two_dimensional_model():
    model = make_model("gausscos2d", 1.0, math.sqrt(2.0))
    mu = gibbs_measure(model, np.array([0.5, 0.5]))
    x0 = initial_positions(mu, 2000, seed=2)
    assert x0.shape == (2000, 2)
    rec = simulate(model, x0, 0.05, 0.5, seed=2)
    columns = rec.as_columns()
    assert {"stat", "stat2"} <= set(columns)
    assert len(columns["stat2"]) == len(rec.t)


def test_bismut_of_constant_is_zero(ou_model):
    result = bismut_gradient(ou_model, 0.0, lambda y: 2.5, 0.3, 1.0, 1.0, 2000, seed=1)
    assert result["estimate"] == 0.0
    assert result["stderr"] == 0.0


def test_bismut_rejects_bad_arguments(ou_model):
    with pytest.raises(DomainError):
        bismut_gradient(ou_model, 0.0, np.sin, 0.0, 1.0, 0.0, 2000, seed=1)
    with pytest.raises(DomainError):
        bismut_gradient(ou_model, 0.0, np.sin, 0.0, 1.0, 1.0, 10, seed=1)
    with pytest.raises(DomainError):
        bismut_gradient(make_model("gausscos2d", 1.0, 1.0), 0.0, np.sin, 0.0, 1.0, 1.0, 2000, seed=1)


@pytest.mark.slow
def test_bismut_ou_linear_function(ou_model):
    # P_t x = x e^{-t}
    result = bismut_gradient(ou_model, 0.0, lambda y: y, 0.3, 1.0, 1.0, 200_000, seed=13)
    assert abs(result["estimate"] - math.exp(-1.0)) < 3.0 * result["stderr"] + 1e-3


@pytest.mark.slow
def test_bismut_agrees_with_finite_differences(dawson, dawson_plus):
    result = bismut_check(dawson, dawson_plus, np.tanh, dawson_plus, 1.0, 1.0, 50_000, seed=19)
    assert abs(result["zscore"]) < 4.0
    assert result["stderr"] > 0
