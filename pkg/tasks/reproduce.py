"""
End-to-end reproduction pipelines with pass/fail gates
"""
import logging
import math
import pathlib
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from commands.base import ExperimentConfig
from messages import LABEL_BASIN
from services.fixed_point_service import (
    find_roots,
    psi,
    psi_closed_form,
    psi_prime_identity,
    select_root,
    solve_pair,
    sweep_sigma,
)
from services.measure_service import moment, resolve_gibbs_measure
from services.metric_service import (
    METRIC_NAMES,
    catalog_metric,
    check_grid,
    default_metric,
    v_one,
    validate_metric,
)
from services.model_service import make_model
from services.particle_service import initial_positions, run_and_fit, simulate
from services.semigroup_service import decay_rate, duhamel_residual, evolve, invariance_check
from services.spectral_engine import build_system, mode_gap, secular_function, spectrum
from storage import content_hash, file_hash, write_csv, write_json
from utils.errors import MetricClassError, MVLabError

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)

EXAMPLES: Dict[str, Dict[str, Any]] = {
    "ex2.1": {
        "model": "dawson", "beta": 1.0, "sigma": 0.5, "basis_size": 30,
        "sigma_min": 0.3, "sigma_max": 3.0, "steps": 12,
        "N": 2000, "dt": 0.005, "T": 50.0, "shift": 0.05, "seeds": 10,
    },
    "ex2.2": {
        "model": "gausscos1d", "beta": 1.0, "sigma": SQRT2, "basis_size": 40,
        "interval_lo": -1.0, "interval_hi": 1.0,
        "N": 20000, "dt": 0.005, "T": 10.0, "shift": 0.1,
    },
    "ex2.3": {
        "model": "gausscos2d", "beta": 1.0, "sigma": SQRT2, "basis_size": 12,
        "N": 5000, "dt": 0.005, "T": 5.0, "shift": 0.1,
    },
    "ex2.4": {
        "model": "subgaussian", "beta": 1.0, "sigma": 0.5, "basis_size": 30,
        "N": 5000, "dt": 0.005, "T": 10.0, "shift": 0.1,
    },
}

# (beta, sigma) pairs for the spectral-sign agreement gate
SIGN_PAIRS = {
    "dawson": [(1.0, 0.4), (1.0, 0.5), (1.0, 1.5), (2.0, 0.5), (2.0, 0.8), (0.5, 2.0)],
    "subgaussian": [(1.0, 0.4), (1.0, 0.5), (1.0, 0.6), (1.5, 0.5), (2.0, 0.5), (2.0, 0.6)],
}

DUHAMEL_TIMES = (0.5, 1.0, 2.0)
DUHAMEL_LIMIT = 1e-8
INVARIANCE_LIMIT = 1e-8


def preset(example_id: str) -> Dict[str, Any]:
    if example_id not in EXAMPLES:
        raise KeyError(f"unknown example '{example_id}', expected one of {sorted(EXAMPLES)}")
    return dict(EXAMPLES[example_id])


def gate(name: str, check: Callable[[], Dict[str, Any]]) -> Dict[str, Any]:
    """Run one check; service errors become a failed gate instead of aborting the pipeline"""
    try:
        result = check()
    except (MVLabError, ArithmeticError, np.linalg.LinAlgError) as e:
        logger.warning("Gate %s raised: %s", name, e)
        return {"success": False, "error": f"{type(e).__name__}: {e}"}
    logger.info("Gate %s: %s", name, "pass" if result.get("success") else "FAIL")
    return result


def _verdict(ok: bool, message: str) -> Dict[str, Any]:
    return {"success": bool(ok), "error": None if ok else message}


def _sign(value: float, tol: float = 1e-8) -> int:
    return 0 if abs(value) <= tol else (1 if value > 0 else -1)


def _semigroup_gate(system, horizon: float = 6.0) -> Dict[str, Any]:
    f = np.zeros(system.L.shape[0])
    f[1] = 1.0
    residuals = {str(t): duhamel_residual(system.L, system.A, f, t, 64) for t in DUHAMEL_TIMES}
    trajectory = evolve(system.L, system.A, f, np.linspace(0.0, horizon, int(round(horizon / 0.05)) + 1))
    invariance = invariance_check(trajectory, 0.0)
    ok = max(residuals.values()) < DUHAMEL_LIMIT and invariance < INVARIANCE_LIMIT
    return {
        **_verdict(ok, f"duhamel {max(residuals.values()):.3e} / invariance {invariance:.3e}"),
        "duhamel_residual": residuals,
        "invariance_err": invariance,
        "trajectory": trajectory,
    }


def _spectral_sign_gate(family: str, pairs, cfg: ExperimentConfig) -> Dict[str, Any]:
    rows = []
    for beta, sigma in pairs:
        model = make_model(family, beta, sigma)
        for root in find_roots(model, cfg.interval, cfg.grid, cfg.truncation, cfg.panels).roots:
            system = build_system(model, root.m, cfg.basis_size, cfg.truncation, cfg.panels)
            report = spectrum(system.L, system.A)
            rows.append({
                "beta": beta, "sigma": sigma, "m": root.m, "psi_prime": root.psi_prime,
                "growth_bound": report.growth_bound,
                "agree": _sign(report.growth_bound) == _sign(root.psi_prime),
            })
    bad = [r for r in rows if not r["agree"]]
    return {**_verdict(not bad and len(pairs) >= 6, f"{len(bad)} sign mismatch(es)"), "rows": rows}


def _identity_gate(model, roots) -> Dict[str, Any]:
    worst = 0.0
    for root in roots:
        identity = psi_prime_identity(model, root.m)
        worst = max(worst, abs(identity - root.psi_prime) / max(abs(identity), 1e-12))
    return {**_verdict(worst < 1e-4, f"relative gap {worst:.3e}"), "max_relative_gap": worst}


def _instability_gate(model, m_plus: float, cfg: ExperimentConfig) -> Dict[str, Any]:
    sym = resolve_gibbs_measure(model, 0.0, cfg.truncation, cfg.panels)
    plus = resolve_gibbs_measure(model, m_plus, cfg.truncation, cfg.panels)
    start_sym = initial_positions(sym, cfg.N, cfg.seed, shift=cfg.shift)
    start_plus = initial_positions(plus, cfg.N, cfg.seed, shift=cfg.shift)

    def run(seed: int, positions, band):
        rec = simulate(model, positions, cfg.dt, cfg.T, seed, record_every=cfg.T, exit_band=band)
        return rec.exit_time

    seeds = [cfg.seed + k for k in range(cfg.seeds)]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        sym_exits = list(pool.map(lambda s: run(s, start_sym, (-m_plus / 2, m_plus / 2)), seeds))
        plus_exits = list(pool.map(lambda s: run(s, start_plus, (m_plus / 2, 1.5 * m_plus)), seeds))

    left = sum(t is not None for t in sym_exits)
    stayed = sum(t is None for t in plus_exits)
    need = math.ceil(0.8 * cfg.seeds)
    return {
        **_verdict(left >= need and stayed >= need, f"symmetric exits {left}/{cfg.seeds}, stable stays {stayed}/{cfg.seeds}"),
        "symmetric_exit_times": sym_exits,
        "stable_exit_times": plus_exits,
    }


def _metric_class_gate() -> Dict[str, Any]:
    """Catalog pairs satisfy phi(r) >= phi(1) (r ^ 1); phi(r) = r^2 must fail the class checks"""
    r = check_grid()
    slack: Dict[str, float] = {}
    for name in METRIC_NAMES:
        spec = catalog_metric(name)
        values = np.asarray(spec.phi(r), dtype=float)
        at_one = float(np.asarray(spec.phi(np.array(1.0))))
        slack[name] = float(np.min(values - at_one * np.minimum(r, 1.0)))
    rejection: Optional[Dict[str, Any]]
    try:
        validate_metric(lambda x: np.asarray(x, dtype=float) ** 2, v_one, name="square")
        rejection = None
    except MetricClassError as e:
        rejection = {"property": e.prop, "witness": e.witness}
    ok = rejection is not None and min(slack.values()) >= -1e-12
    return {
        **_verdict(ok, "phi(r) = r^2 accepted" if rejection is None else f"lower bound slack {slack}"),
        "lower_bound_slack": slack,
        "square_rejected": rejection,
        "phi_integral": catalog_metric("subgauss").phi_integral,
    }


def _trajectory(model, target, cfg: ExperimentConfig, T: float, metric=None) -> Dict[str, Any]:
    """Recorded particle run from the shifted target; an empty table when the run fails"""
    try:
        rec = simulate(
            model, initial_positions(target, cfg.N, cfg.seed, shift=cfg.shift), cfg.dt, T, cfg.seed,
            record_every=max(10 * cfg.dt, cfg.T / 200), target=target, metric=metric,
        )
    except MVLabError as e:
        logger.warning("Trajectory run failed: %s", e)
        return {"t": []}
    return rec.as_columns()


def _write_common(out: pathlib.Path, roots_columns, eigenvalues, trajectory_columns) -> None:
    write_csv(out / "stationary.csv", roots_columns)
    eig = np.asarray(eigenvalues)
    write_csv(out / "eigenvalues.csv", {"re": eig.real, "im": eig.imag})
    write_csv(out / "trajectory.csv", trajectory_columns)


def _root_columns(roots) -> Dict[str, List[Any]]:
    return {
        "m": [r.m for r in roots],
        "psi_prime": [r.psi_prime for r in roots],
        "classification": [r.classification for r in roots],
    }


def reproduce_double_well(cfg: ExperimentConfig, out: pathlib.Path, compare_dawson: bool) -> Dict[str, Any]:
    """Dawson (and its sub-Gaussian push-forward): phase transition, stability of the outer roots"""
    model = make_model(cfg.model, cfg.beta, cfg.sigma)
    gates: Dict[str, Any] = {}
    grid = np.linspace(cfg.interval_lo, cfg.interval_hi, cfg.grid)
    found: Dict[str, Any] = {}

    def three_roots():
        result = find_roots(model, cfg.interval, cfg.grid, cfg.truncation, cfg.panels)
        found["result"] = result
        odd = max(abs(psi(model, m, cfg.truncation, cfg.panels) + psi(model, -m, cfg.truncation, cfg.panels)) for m in grid)
        return {
            **_verdict(len(result.roots) == 3 and odd < 1e-12, f"{len(result.roots)} root(s), oddness {odd:.3e}"),
            "roots": result.values,
            "oddness": odd,
        }

    gates["three_roots"] = gate("three_roots", three_roots)
    result = found.get("result")
    if result is None:
        _write_common(out, _root_columns([]), np.zeros(0, dtype=complex), {"t": []})
        return gates

    gates["psi_prime_identity"] = gate("psi_prime_identity", lambda: _identity_gate(model, result.roots))

    if compare_dawson:
        dawson = make_model("dawson", cfg.beta, cfg.sigma)

        def equivalence():
            gap = max(abs(psi(model, m) - psi(dawson, m)) for m in grid)
            return {**_verdict(gap < 1e-8, f"max |psi gap| {gap:.3e}"), "max_gap": gap}

        gates["dawson_equivalence"] = gate("dawson_equivalence", equivalence)
        gates["metric_class"] = gate("metric_class", _metric_class_gate)

    gates["spectral_sign"] = gate(
        "spectral_sign",
        lambda: _spectral_sign_gate(cfg.model, SIGN_PAIRS[cfg.model], cfg),
    )

    stable: Dict[str, Any] = {}

    def stable_root():
        m_plus = select_root(result, "plus").m
        system = build_system(model, m_plus, cfg.basis_size, cfg.truncation, cfg.panels)
        report = spectrum(system.L, system.A)
        mu_plus = resolve_gibbs_measure(model, m_plus, cfg.truncation, cfg.panels)
        spread = moment(mu_plus, lambda x: (model.stat(x) - m_plus) ** 2)
        condition = 2.0 * model.beta / model.sigma ** 2 * spread
        stable.update(m_plus=m_plus, system=system, report=report, mu_plus=mu_plus)
        return {
            **_verdict(report.stable and condition < 1 and report.zero_simple, "m_plus not linearly stable"),
            "m_plus": m_plus,
            "growth_bound": report.growth_bound,
            "spectral_condition": condition,
        }

    gates["stable_root"] = gate("stable_root", stable_root)

    eigenvalues: np.ndarray = np.zeros(0, dtype=complex)
    trajectory_columns: Dict[str, Any] = {"t": []}
    if stable:
        m_plus, system, mu_plus = stable["m_plus"], stable["system"], stable["mu_plus"]
        eigenvalues = stable["report"].eigenvalues
        semigroup = gate("semigroup", lambda: _semigroup_gate(system))
        semigroup.pop("trajectory", None)
        gates["semigroup"] = semigroup

        if compare_dawson:
            metric = default_metric(model)

            def weighted_decay():
                rec = simulate(
                    model, initial_positions(mu_plus, cfg.N, cfg.seed, shift=cfg.shift), cfg.dt, cfg.T, cfg.seed,
                    record_every=max(10 * cfg.dt, cfg.T / 200), target=mu_plus, metric=metric,
                )
                stable["columns"] = rec.as_columns()
                first, last = rec.weighted_ub[0], rec.weighted_ub[-1]
                return {
                    **_verdict(np.isfinite(last) and last < first, f"weighted bound {first:.4g} -> {last:.4g}"),
                    "initial": first,
                    "final": last,
                    "metric": metric.name,
                }

            gates["weighted_decay"] = gate("weighted_decay", weighted_decay)
            trajectory_columns = stable.get("columns", trajectory_columns)
        else:
            def sweep():
                table = sweep_sigma(
                    cfg.model, cfg.beta, (cfg.sigma_min, cfg.sigma_max), cfg.steps,
                    interval=cfg.interval, grid=cfg.grid, panels=cfg.panels, threads=cfg.workers,
                )
                ok = table["sigma_c_bracketed"] and table["num_roots"][0] == 3 and table["num_roots"][-1] == 1
                return {**_verdict(ok, "phase transition not bracketed"), **table}

            gates["sigma_sweep"] = gate("sigma_sweep", sweep)
            gates["instability"] = gate("instability", lambda: _instability_gate(model, m_plus, cfg))
            trajectory_columns = _trajectory(model, mu_plus, cfg, min(cfg.T, 10.0), default_metric(model))

    _write_common(out, _root_columns(result.roots), eigenvalues, trajectory_columns)
    return gates


def reproduce_gauss_cos(cfg: ExperimentConfig, out: pathlib.Path) -> Dict[str, Any]:
    """Gaussian model: closed-form root, perturbed eigenvalue, Duhamel certificate, particle rate"""
    model = make_model(cfg.model, cfg.beta, cfg.sigma)
    gates: Dict[str, Any] = {}
    grid = np.linspace(cfg.interval_lo, cfg.interval_hi, cfg.grid)
    found: Dict[str, Any] = {}

    def root_gate():
        result = find_roots(model, cfg.interval, cfg.grid, cfg.truncation, cfg.panels)
        found["result"] = result
        closed = max(abs(psi(model, m) - psi_closed_form(model, m)) for m in grid)
        root = result.roots[0] if len(result.roots) == 1 else None
        found["root"] = root
        return {
            **_verdict(root is not None and root.condition and closed < 1e-10, f"roots {result.values}, closed-form gap {closed:.3e}"),
            "m_star": root.m if root else None,
            "closed_form_gap": closed,
        }

    gates["root"] = gate("root", root_gate)
    result, root = found.get("result"), found.get("root")
    if root is None:
        roots = result.roots if result is not None else []
        _write_common(out, _root_columns(roots), np.zeros(0, dtype=complex), {"t": []})
        return gates

    m_star = root.m

    def perturbed_eigenvalue():
        system = build_system(model, m_star, cfg.basis_size, cfg.truncation, cfg.panels)
        report = spectrum(system.L, system.A)
        found.update(system=system, report=report)
        expected = -1.0 - model.beta * math.exp(-model.sigma ** 2 / 4.0) * math.sin(model.beta * m_star)
        nearest = report.eigenvalues[np.argmin(np.abs(report.eigenvalues - expected))]
        gap = abs(nearest - expected)
        return {
            **_verdict(
                gap < 1e-6 and report.zero_residual < 1e-8 and report.zero_simple and report.stable,
                f"|lambda - lambda*| = {gap:.3e}, zero residual {report.zero_residual:.3e}",
            ),
            "lambda_star": expected,
            "eigenvalue": [nearest.real, nearest.imag],
            "lambda_Q": report.lambda_Q,
            "lambda_P": report.lambda_P,
            "zero_residual": report.zero_residual,
            "zero_simple": report.zero_simple,
            "secular_value": abs(secular_function(system.L, system.c[0], system.r[0], expected)),
        }

    gates["perturbed_eigenvalue"] = gate("perturbed_eigenvalue", perturbed_eigenvalue)
    if "report" not in found:
        _write_common(out, _root_columns(result.roots), np.zeros(0, dtype=complex), {"t": []})
        return gates
    system, report = found["system"], found["report"]

    def robustness():
        drift = basis_drift(model, m_star, cfg)
        return {**_verdict(drift < 1e-6, f"lambda_Q drift {drift:.3e}"), "drift": drift}

    gates["basis_robustness"] = gate("basis_robustness", robustness)

    def semigroup():
        # fit only after the faster modes have died out
        start = max(2.0, 5.0 / mode_gap(report))
        checks = _semigroup_gate(system, horizon=start + 6.0)
        fit = decay_rate(checks.pop("trajectory"), (start, start + 6.0))
        gap_rate = abs(fit.rate - report.lambda_Q)
        ok = checks["success"] and gap_rate < 1e-3
        message = f"{checks['error'] or ''} rate gap {gap_rate:.3e}".strip()
        return {**checks, **_verdict(ok, message), "rate": fit.rate, "r2": fit.r_squared}

    gates["semigroup"] = gate("semigroup", semigroup)

    def particle_rate():
        target = resolve_gibbs_measure(model, m_star, cfg.truncation, cfg.panels)
        found["target"] = target
        fit, diagnostics = run_and_fit(model, cfg.shift, cfg.N, cfg.dt, cfg.T, cfg.seed, target)
        reference = min(report.lambda_P, report.lambda_Q)
        ratio = fit.rate / reference
        ok = 0.5 <= ratio <= 2.0 and fit.r_squared > 0.9
        return {**_verdict(ok, f"rate ratio {ratio:.3f}, R^2 {fit.r_squared:.3f}"), **fit.as_dict(), "ratio": ratio, **diagnostics}

    gates["particle_rate"] = gate("particle_rate", particle_rate)

    columns: Dict[str, Any] = {"t": []}
    if "target" in found:
        columns = _trajectory(model, found["target"], cfg, cfg.T, default_metric(model))
    _write_common(out, _root_columns(result.roots), report.eigenvalues, columns)
    return gates


def basis_drift(model, m_star: float, cfg: ExperimentConfig, sizes=(30, 45)) -> float:
    """|lambda_Q(K_small) - lambda_Q(K_large)| at a fixed root"""
    small, large = (
        spectrum(*_pair(build_system(model, m_star, k, cfg.truncation, cfg.panels))).lambda_Q for k in sizes
    )
    return abs(small - large)


def _pair(system):
    return system.L, system.A


def reproduce_gauss_cos_2d(cfg: ExperimentConfig, out: pathlib.Path) -> Dict[str, Any]:
    """Two coupled Gaussian components: pair fixed point and the quadratic pair of eigenvalues"""
    model = make_model(cfg.model, cfg.beta, cfg.sigma)
    pair = solve_pair(model, truncation=cfg.truncation, panels=cfg.panels)
    gates: Dict[str, Any] = {
        "fixed_point": {**_verdict(pair["converged"] and pair["condition"], f"residual {pair['residual']:.3e}"), **pair}
    }
    m1, m2 = pair["m"]
    system = build_system(model, pair["m"], cfg.basis_size, cfg.truncation, cfg.panels)
    report = spectrum(system.L, system.A)

    scale = model.beta * math.exp(-model.sigma ** 2 / 4.0)
    root = np.sqrt(complex(math.sin(model.beta * m1) * math.sin(model.beta * m2)))
    expected = [-1.0 + scale * root, -1.0 - scale * root]
    gaps = [float(np.min(np.abs(report.eigenvalues - e))) for e in expected]
    gates["quadratic_eigenvalues"] = {
        **_verdict(max(gaps) < 1e-6 and report.zero_simple, f"eigenvalue gaps {gaps}"),
        "expected": [[e.real, e.imag] for e in expected],
        "gaps": gaps,
        "lambda_Q": report.lambda_Q,
    }

    target = resolve_gibbs_measure(model, np.asarray(pair["m"]), cfg.truncation, cfg.panels)
    rec = simulate(
        model, initial_positions(target, cfg.N, cfg.seed, shift=cfg.shift), cfg.dt, cfg.T, cfg.seed,
        record_every=max(10 * cfg.dt, cfg.T / 200),
    )
    final = np.asarray(rec.stat[-1])
    drift = float(np.max(np.abs(final - np.asarray(pair["m"]))))
    gates["particle_relaxation"] = {**_verdict(drift < 0.05, f"final statistic off by {drift:.3e}"), "final_stat": final.tolist()}

    roots_columns = {"m1": [m1], "m2": [m2], "residual": [pair["residual"]]}
    _write_common(out, roots_columns, report.eigenvalues, rec.as_columns())
    return gates


def run_example(example_id: str, cfg: ExperimentConfig, out: pathlib.Path) -> Dict[str, Any]:
    """
    Run one pipeline, write its outputs into out and return the manifest.

    Returns:
        manifest dict with config, input hash, gates, failed gate names and output hashes
    """
    logger.info("Reproducing %s with %s", example_id, cfg.model)
    if example_id in ("ex2.1", "ex2.4"):
        gates = reproduce_double_well(cfg, out, compare_dawson=example_id == "ex2.4")
    elif example_id == "ex2.2":
        gates = reproduce_gauss_cos(cfg, out)
    elif example_id == "ex2.3":
        gates = reproduce_gauss_cos_2d(cfg, out)
    else:
        raise KeyError(f"unknown example '{example_id}'")

    config = cfg.model_dump(exclude={"out_dir", "threads"})
    failed = sorted(name for name, g in gates.items() if not g.get("success"))
    manifest = {
        "example": example_id,
        "config": config,
        "input_hash": content_hash({"example": example_id, "config": config}),
        "gates": gates,
        "failed_gates": failed,
        "passed": not failed,
        "basin": LABEL_BASIN,
        "outputs": {p.name: file_hash(p) for p in sorted(out.iterdir()) if p.suffix in (".csv",)},
    }
    write_json(out / "manifest.json", manifest)
    return manifest
