"""
spectrum / semigroup-check - Galerkin spectrum and semigroup certificates at a stationary point
"""
import logging

import numpy as np

from commands.base import ExperimentConfig, stationary_point
from services.semigroup_service import decay_rate, duhamel_residual, evolve, invariance_check
from services.spectral_engine import TensorBasis, build_system, spectrum
from storage import open_output_dir, write_csv, write_json
from storage.file_utils import dumps

logger = logging.getLogger(__name__)

TIME_STEP = 0.05


def spectrum_report(cfg: ExperimentConfig) -> dict:
    model, s = stationary_point(cfg)
    system = build_system(model, s, cfg.basis_size, cfg.truncation, cfg.panels)
    report = spectrum(system.L, system.A)
    return {"model": model.name.value, "beta": model.beta, "sigma": model.sigma, "s": s, **report.as_dict()}


def run_spectrum(cfg: ExperimentConfig) -> int:
    report = spectrum_report(cfg)
    eig = np.asarray(report["eigenvalues"], dtype=float)
    with open_output_dir(cfg.out_dir) as out:
        write_csv(out / "eigenvalues.csv", {"re": eig[:, 0], "im": eig[:, 1]})
        write_json(out / "spectrum.json", report)
    summary = {k: report[k] for k in ("lambda_Q", "lambda_P", "zero_simple", "stable")}
    print(dumps(summary), end="")
    return 0


def first_mode(system) -> np.ndarray:
    """Coefficients of p_1 (p_1 x 1 in 2D): a mean-zero test function"""
    f = np.zeros(system.L.shape[0])
    basis = system.basis
    f[basis.index(1, 0) if isinstance(basis, TensorBasis) else 1] = 1.0
    return f


def semigroup_report(cfg: ExperimentConfig) -> dict:
    model, s = stationary_point(cfg)
    system = build_system(model, s, cfg.basis_size, cfg.truncation, cfg.panels)
    f = first_mode(system)
    times = np.linspace(0.0, cfg.window_hi, int(round(cfg.window_hi / TIME_STEP)) + 1)
    trajectory = evolve(system.L, system.A, f, times)
    fit = decay_rate(trajectory, (cfg.window_lo, cfg.window_hi))
    report = spectrum(system.L, system.A)
    return {
        "model": model.name.value,
        "s": s,
        "t": cfg.t,
        "substeps": cfg.substeps,
        "duhamel_residual": duhamel_residual(system.L, system.A, f, cfg.t, cfg.substeps),
        "invariance_err": invariance_check(trajectory, float(f[0])),
        "rate": fit.rate,
        "r2": fit.r_squared,
        "lambda_Q": report.lambda_Q,
        "trajectory": trajectory,
    }


def run_semigroup(cfg: ExperimentConfig) -> int:
    report = semigroup_report(cfg)
    trajectory = report.pop("trajectory")
    with open_output_dir(cfg.out_dir) as out:
        write_csv(out / "semigroup.csv", trajectory.as_columns())
        write_json(out / "semigroup.json", report)
    print(dumps({k: report[k] for k in ("duhamel_residual", "invariance_err", "rate", "r2")}), end="")
    return 0
