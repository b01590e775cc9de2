"""
simulate / rate / bismut-check - particle runs against the stationary law
"""
import logging

from commands.base import ExperimentConfig, stationary_point
from messages import LABEL_BASIN, LABEL_LAMBDA_P, LABEL_WEIGHTED
from services.measure_service import resolve_gibbs_measure
from services.metric_service import catalog_metric, default_metric
from services.particle_service import bismut_check, initial_positions, run_and_fit, simulate
from services.spectral_engine import build_system, spectrum
from storage import open_output_dir, write_csv, write_json
from storage.file_utils import dumps
from utils.errors import DomainError, FitWindowError

logger = logging.getLogger(__name__)


def record_interval(cfg: ExperimentConfig) -> float:
    return max(10 * cfg.dt, cfg.T / 200)


def simulation_record(cfg: ExperimentConfig):
    model, s = stationary_point(cfg)
    target = resolve_gibbs_measure(model, s, cfg.truncation, cfg.panels)
    positions = initial_positions(target, cfg.N, cfg.seed, shift=cfg.shift)
    metric = None
    if model.dim == 1:
        metric = catalog_metric(cfg.metric, cfg.p) if cfg.metric else default_metric(model)
    record = simulate(
        model,
        positions,
        cfg.dt,
        cfg.T,
        cfg.seed,
        record_every=record_interval(cfg),
        target=target if model.dim == 1 else None,
        metric=metric,
        tamed=cfg.tamed,
        antithetic=cfg.antithetic,
    )
    return model, s, metric, record


def run_simulate(cfg: ExperimentConfig) -> int:
    model, s, metric, record = simulation_record(cfg)
    summary = {
        "model": model.name.value,
        "s": s,
        "final_stat": record.stat[-1],
        "final_w1": record.w1[-1] if record.w1 else None,
        "final_weighted_ub": record.weighted_ub[-1] if record.weighted_ub else None,
        "metric": metric.name if metric else None,
        "weighted_ub": LABEL_WEIGHTED,
        "basin": LABEL_BASIN,
    }
    with open_output_dir(cfg.out_dir) as out:
        write_csv(out / "trajectory.csv", record.as_columns())
        write_json(out / "simulate.json", summary)
    print(dumps(summary), end="")
    return 0


def rate_report(cfg: ExperimentConfig) -> dict:
    model, s = stationary_point(cfg)
    if model.dim != 1:
        raise DomainError("rate fits need a 1D model")
    target = resolve_gibbs_measure(model, s, cfg.truncation, cfg.panels)
    system = build_system(model, s, cfg.basis_size, cfg.truncation, cfg.panels)
    report = spectrum(system.L, system.A)
    reference = min(report.lambda_P, report.lambda_Q)

    base = {
        "model": model.name.value,
        "s": s,
        "lambda_P": report.lambda_P,
        "lambda_P_label": LABEL_LAMBDA_P,
        "lambda_Q": report.lambda_Q,
        "reference_rate": reference,
        "basin": LABEL_BASIN,
    }
    try:
        fit, diagnostics = run_and_fit(model, cfg.shift, cfg.N, cfg.dt, cfg.T, cfg.seed, target, tamed=cfg.tamed)
    except FitWindowError as e:
        return {**base, "success": False, "error": str(e), "diagnostics": e.diagnostics}

    ratio = fit.rate / reference if reference > 0 else None
    return {
        **base,
        "success": True,
        "error": None,
        "fit": fit.as_dict(),
        "diagnostics": diagnostics,
        "ratio": ratio,
        "within_factor_2": ratio is not None and 0.5 <= ratio <= 2.0,
    }


def run_rate(cfg: ExperimentConfig) -> int:
    report = rate_report(cfg)
    with open_output_dir(cfg.out_dir) as out:
        write_json(out / "rate.json", report)
    print(dumps(report), end="")
    if not report["success"]:
        logger.error("rate fit failed: %s", report["error"])
        return 1
    return 0


def identity(x):
    return x


def bismut_report(cfg: ExperimentConfig) -> dict:
    model, s = stationary_point(cfg)
    if model.dim != 1:
        raise DomainError("bismut-check needs a 1D model")
    x = s if cfg.x is None else cfg.x
    check = bismut_check(model, s, identity, x, cfg.v, cfg.t, cfg.paths, cfg.seed)
    return {"model": model.name.value, "s": s, "x": x, "v": cfg.v, "t": cfg.t, "paths": cfg.paths, **check}


def run_bismut(cfg: ExperimentConfig) -> int:
    report = bismut_report(cfg)
    with open_output_dir(cfg.out_dir) as out:
        write_json(out / "bismut.json", report)
    print(dumps(report), end="")
    return 0
