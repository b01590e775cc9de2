import pytest

from commands.base import load_config
from services.fixed_point_service import find_roots, select_root
from services.model_service import make_model
from storage import read_json
from tasks import reproduce
from tasks.reproduce import SIGN_PAIRS, basis_drift, preset, run_example
from utils.errors import AssemblyError, NumericError


def config_for(example_id, **overrides):
    return load_config(overrides, None, preset(example_id))


@pytest.mark.parametrize(
    "family,beta,sigma",
    [(family, beta, sigma) for family, pairs in SIGN_PAIRS.items() for beta, sigma in pairs],
)
def test_growth_bound_sign_matches_psi_prime(family, beta, sigma):
    cfg = config_for("ex2.1" if family == "dawson" else "ex2.4")
    rows = reproduce._spectral_sign_gate(family, [(beta, sigma)], cfg)["rows"]
    assert rows
    for row in rows:
        assert row["agree"], row


def test_sign_gate_needs_six_pairs():
    cfg = config_for("ex2.1")
    result = reproduce._spectral_sign_gate("dawson", SIGN_PAIRS["dawson"][:2], cfg)
    assert result["success"] is False
    assert all(row["agree"] for row in result["rows"])


def test_gauss_cos_lambda_q_is_basis_robust(gauss_cos, gauss_cos_root):
    assert basis_drift(gauss_cos, gauss_cos_root, config_for("ex2.2")) < 1e-6


def test_metric_class_gate_rejects_square():
    result = reproduce._metric_class_gate()
    assert result["success"] is True
    assert result["error"] is None
    rejected = result["square_rejected"]
    assert "concavity" in rejected["property"]
    assert rejected["witness"] > 0
    assert set(result["lower_bound_slack"]) == {"w1", "poly", "subgauss"}
    assert min(result["lower_bound_slack"].values()) >= -1e-12


def test_metric_class_gate_fails_when_square_is_accepted(monkeypatch):
    monkeypatch.setattr(reproduce, "validate_metric", lambda phi, V, name="custom": None)
    result = reproduce._metric_class_gate()
    assert result["success"] is False
    assert result["square_rejected"] is None


def test_root_failure_still_writes_manifest(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise NumericError("psi is not finite")

    monkeypatch.setattr(reproduce, "find_roots", broken)
    manifest = run_example("ex2.1", config_for("ex2.1"), tmp_path)
    assert manifest["passed"] is False
    assert manifest["failed_gates"] == ["three_roots"]
    assert "NumericError" in manifest["gates"]["three_roots"]["error"]
    assert read_json(tmp_path / "manifest.json")["failed_gates"] == ["three_roots"]
    assert set(manifest["outputs"]) == {"eigenvalues.csv", "stationary.csv", "trajectory.csv"}


def test_assembly_failure_still_writes_manifest(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise AssemblyError("generator is not finite")

    monkeypatch.setattr(reproduce, "build_system", broken)
    manifest = run_example("ex2.1", config_for("ex2.1"), tmp_path)
    assert {"spectral_sign", "stable_root"} <= set(manifest["failed_gates"])
    assert "AssemblyError" in manifest["gates"]["stable_root"]["error"]
    assert "semigroup" not in manifest["gates"]
    assert manifest["gates"]["three_roots"]["success"] is True
    assert (tmp_path / "manifest.json").exists()


def test_gauss_cos_assembly_failure_still_writes_manifest(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise AssemblyError("generator is not finite")

    monkeypatch.setattr(reproduce, "build_system", broken)
    manifest = run_example("ex2.2", config_for("ex2.2"), tmp_path)
    assert manifest["gates"]["root"]["success"] is True
    assert manifest["failed_gates"] == ["perturbed_eigenvalue"]
    assert (tmp_path / "manifest.json").exists()


@pytest.mark.slow
def test_instability_gate(dawson, dawson_plus):
    cfg = config_for("ex2.1", N=1000)
    result = reproduce._instability_gate(dawson, dawson_plus, cfg)
    assert result["success"] is True
    symmetric, stable = result["symmetric_exit_times"], result["stable_exit_times"]
    assert len(symmetric) == len(stable) == cfg.seeds == 10
    # the symmetric law is left by time T, the outer one is kept
    assert sum(t is not None for t in symmetric) >= 8
    assert sum(t is None for t in stable) >= 8
    assert all(0 < t <= cfg.T for t in symmetric if t is not None)


@pytest.mark.slow
def test_instability_gate_ignores_thread_count():
    cfg = config_for("ex2.1", N=1000, threads=1)
    model = make_model(cfg.model, cfg.beta, cfg.sigma)
    m_plus = select_root(find_roots(model, cfg.interval, cfg.grid), "plus").m
    serial = reproduce._instability_gate(model, m_plus, cfg)
    pooled = reproduce._instability_gate(model, m_plus, config_for("ex2.1", N=1000, threads=4))
    assert serial["symmetric_exit_times"] == pooled["symmetric_exit_times"]
    assert serial["stable_exit_times"] == pooled["stable_exit_times"]
