"""
stationary / sweep-sigma - self-consistent stationary statistics
"""
import logging

from commands.base import ExperimentConfig, build_model
from services.fixed_point_service import find_roots, solve_pair, sweep_sigma
from storage import open_output_dir, write_csv, write_json
from storage.file_utils import dumps

logger = logging.getLogger(__name__)


def stationary_report(cfg: ExperimentConfig) -> dict:
    model = build_model(cfg)
    if model.dim == 2:
        pair = solve_pair(model, truncation=cfg.truncation, panels=cfg.panels)
        return {"model": model.name.value, "beta": model.beta, "sigma": model.sigma, "pair": pair}
    result = find_roots(model, cfg.interval, cfg.grid, cfg.truncation, cfg.panels)
    return {"model": model.name.value, "beta": model.beta, "sigma": model.sigma, **result.as_dict()}


def run_stationary(cfg: ExperimentConfig) -> int:
    report = stationary_report(cfg)
    if "roots" in report:
        roots = report["roots"]
        columns = {
            "m": [r["m"] for r in roots],
            "psi_prime": [r["psi_prime"] for r in roots],
            "classification": [r["classification"] for r in roots],
            "residual": [r["residual"] for r in roots],
        }
    else:
        columns = {"m1": [report["pair"]["m"][0]], "m2": [report["pair"]["m"][1]], "residual": [report["pair"]["residual"]]}

    with open_output_dir(cfg.out_dir) as out:
        write_csv(out / "stationary.csv", columns)
        write_json(out / "stationary.json", report)
    print(dumps(report), end="")
    return 0


def run_sweep(cfg: ExperimentConfig) -> int:
    table = sweep_sigma(
        cfg.model,
        cfg.beta,
        (cfg.sigma_min, cfg.sigma_max),
        cfg.steps,
        interval=cfg.interval,
        grid=cfg.grid,
        panels=cfg.panels,
        threads=cfg.workers,
    )
    with open_output_dir(cfg.out_dir) as out:
        write_csv(
            out / "sweep.csv",
            {"sigma": table["sigma"], "num_roots": table["num_roots"], "m_plus": table["m_plus"]},
        )
        write_json(out / "sweep.json", table)
    if table["sigma_c"] is None:
        logger.info("sigma_c: not-bracketed")
    print(dumps({"sigma_c": table["sigma_c"], "sigma_c_bracketed": table["sigma_c_bracketed"]}), end="")
    return 0
