"""
Particle service - N-particle Euler-Maruyama simulation, distances to stationary laws, empirical
rate fits and the Bismut gradient estimator for the frozen SDE.
"""
import logging
import math
import time as clock
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from config import BLOWUP_THRESHOLD
from messages import LABEL_BASIN, MSG_DIVERGED, MSG_FIT_WINDOW
from services.measure_service import GridMeasure, ProductMeasure, quantile_grid, sample
from services.metric_service import MetricSpec, validate_metric
from services.model_service import ModelSpec
from services.rate_fit import RateFit, fit_exponential
from services.rng import STREAM_BISMUT, STREAM_FLOOR, STREAM_PARTICLE, STREAM_SAMPLE, normals
from utils.errors import DivergenceError, DomainError, FitWindowError, NumericError
from utils.helpers import humanize_count, humanize_seconds

logger = logging.getLogger(__name__)

MAX_DT = 0.1
BISMUT_DT = 0.002
FD_STEP = 1e-3


@dataclass(frozen=True)
class ParticleEnsemble:
    positions: np.ndarray
    time: float
    seed: int
    step_count: int
    stat_history: Tuple[Tuple[float, Any], ...] = ()

    @property
    def size(self) -> int:
        return int(self.positions.shape[0])

    @property
    def dim(self) -> int:
        return 1 if self.positions.ndim == 1 else int(self.positions.shape[1])

    @property
    def rng_state(self) -> Tuple[int, int]:
        return self.seed, self.step_count


def init_ensemble(positions, seed: int, time: float = 0.0) -> ParticleEnsemble:
    positions = np.array(positions, dtype=float)
    if positions.ndim not in (1, 2) or positions.shape[0] == 0:
        raise DomainError("positions must be a nonempty (N,) or (N, 2) array")
    if not np.all(np.isfinite(positions)):
        raise NumericError("initial positions are not finite")
    positions.setflags(write=False)
    return ParticleEnsemble(positions=positions, time=float(time), seed=int(seed), step_count=0)


def initial_positions(
    target: Union[GridMeasure, ProductMeasure],
    n: int,
    seed: int,
    shift: float = 0.0,
    stratified: bool = True,
) -> np.ndarray:
    """
    n positions distributed as target translated by shift. Stratified positions are the midpoint
    quantiles; otherwise i.i.d. inverse-CDF draws.
    """
    if isinstance(target, ProductMeasure):
        cols = [
            (quantile_grid(m, n) if stratified else sample(m, n, seed, stream=STREAM_SAMPLE + 10 * axis))
            for axis, m in enumerate(target.marginals)
        ]
        if stratified:
            # decorrelate the two coordinates with a fixed permutation
            cols[1] = cols[1][np.random.Generator(np.random.Philox(key=int(seed))).permutation(n)]
        return np.stack(cols, axis=-1) + shift
    base = quantile_grid(target, n) if stratified else sample(target, n, seed, stream=STREAM_SAMPLE)
    return base + shift


def _statistic(model: ModelSpec, x: np.ndarray):
    # np.sum uses pairwise summation, fixed for a given N
    values = model.stat(x)
    total = np.sum(values, axis=0)
    return total / x.shape[0] if np.ndim(total) else float(total) / x.shape[0]


def _advance(
    model: ModelSpec,
    x: np.ndarray,
    s,
    dt: float,
    noise: np.ndarray,
    tamed: bool,
) -> np.ndarray:
    drift = model.drift(x, s)
    if tamed:
        size = np.abs(drift) if drift.ndim == 1 else np.linalg.norm(drift, axis=-1, keepdims=True)
        drift = drift / (1.0 + dt * size)
    return x + drift * dt + model.sigma * math.sqrt(dt) * noise


def _guard(x: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(x)):
        raise DivergenceError(MSG_DIVERGED.format(time=t, max_abs=float("inf")), time=t)
    top = float(np.max(np.abs(x)))
    if top > BLOWUP_THRESHOLD:
        raise DivergenceError(MSG_DIVERGED.format(time=t, max_abs=top), time=t)


def _euler_update(
    model: ModelSpec,
    x: np.ndarray,
    s,
    dt: float,
    seed: int,
    k: int,
    t: float,
    tamed: bool,
    antithetic: bool,
) -> np.ndarray:
    """Positions after step k (0-based) ending at time t"""
    noise = normals(seed, STREAM_PARTICLE, k, x.shape)
    if antithetic:
        noise = -noise
    x = _advance(model, x, s, dt, noise, tamed)
    _guard(x, t)
    return x


def step(
    ens: ParticleEnsemble,
    model: ModelSpec,
    dt: float,
    tamed: bool = False,
    antithetic: bool = False,
) -> ParticleEnsemble:
    """
    One Euler-Maruyama step with the interaction statistic taken from the current ensemble.
    Noise for particle i at step k depends only on (seed, k, i).
    """
    if not 0 < dt <= MAX_DT:
        raise DomainError(f"dt must lie in (0, {MAX_DT}], got {dt}")
    if ens.dim != model.dim:
        raise DomainError(f"ensemble dim {ens.dim} does not match model dim {model.dim}")

    s = _statistic(model, ens.positions)
    t = ens.time + dt
    x = _euler_update(model, ens.positions, s, dt, ens.seed, ens.step_count, t, tamed, antithetic)
    x.setflags(write=False)
    return ParticleEnsemble(
        positions=x,
        time=t,
        seed=ens.seed,
        step_count=ens.step_count + 1,
        stat_history=ens.stat_history + ((t, s),),
    )


def _sorted_pairs(ens: ParticleEnsemble, mu: GridMeasure) -> Tuple[np.ndarray, np.ndarray]:
    if ens.dim != 1:
        raise DomainError("distances to a 1D measure need a 1D ensemble")
    return np.sort(ens.positions), quantile_grid(mu, ens.size)


def w1_to(ens: ParticleEnsemble, mu: GridMeasure) -> float:
    """W1 between the empirical measure and mu by pairing order statistics with midpoint quantiles"""
    x, q = _sorted_pairs(ens, mu)
    return float(np.mean(np.abs(x - q)))


def weighted_distance_to(
    ens: ParticleEnsemble,
    mu: GridMeasure,
    V: Callable,
    phi: Callable,
    validate: bool = True,
) -> float:
    """
    Comonotone-coupling cost mean(phi(|x - q|) (V(x) + V(q)) / 2): an upper bound of the weighted
    distance, equal to W1 for phi(r) = r and V = 1.
    """
    if validate:
        validate_metric(phi, V)
    x, q = _sorted_pairs(ens, mu)
    gap = np.broadcast_to(np.asarray(phi(np.abs(x - q)), dtype=float), x.shape)
    weight = (
        np.broadcast_to(np.asarray(V(x), dtype=float), x.shape)
        + np.broadcast_to(np.asarray(V(q), dtype=float), x.shape)
    ) / 2.0
    cost = gap * weight
    if not np.all(np.isfinite(cost)):
        raise NumericError("weighted cost is not finite on the ensemble")
    return float(np.mean(cost))


def two_sample_w1(mu: GridMeasure, n: int, seed: int) -> float:
    """W1 between two independent n-samples of mu (Monte Carlo noise floor)"""
    a = np.sort(sample(mu, n, seed, stream=STREAM_FLOOR))
    b = np.sort(sample(mu, n, seed, stream=STREAM_FLOOR + 1))
    return float(np.mean(np.abs(a - b)))


def one_sample_w1(mu: GridMeasure, n: int, seed: int) -> float:
    """W1 between one n-sample of mu and mu itself, measured the way w1_to measures an ensemble"""
    a = np.sort(sample(mu, n, seed, stream=STREAM_FLOOR))
    return float(np.mean(np.abs(a - quantile_grid(mu, n))))


@dataclass
class SimulationRecord:
    t: List[float]
    stat: List[Any]
    w1: List[float]
    weighted_ub: List[float]
    final: ParticleEnsemble
    exit_time: Optional[float] = None

    def as_columns(self) -> Dict[str, Any]:
        columns: Dict[str, Any] = {"t": self.t}
        stats = np.asarray(self.stat, dtype=float)
        if stats.ndim == 2:
            columns["stat"] = stats[:, 0]
            columns["stat2"] = stats[:, 1]
        else:
            columns["stat"] = stats
        columns["w1"] = self.w1 if self.w1 else [math.nan] * len(self.t)
        columns["weighted_ub"] = self.weighted_ub if self.weighted_ub else [math.nan] * len(self.t)
        return columns


def simulate(
    model: ModelSpec,
    positions,
    dt: float,
    T: float,
    seed: int,
    record_every: Optional[float] = None,
    target: Optional[GridMeasure] = None,
    metric: Optional[MetricSpec] = None,
    tamed: bool = False,
    antithetic: bool = False,
    exit_band: Optional[Tuple[float, float]] = None,
) -> SimulationRecord:
    """
    Run the particle system to time T, recording the statistic (and distances to target) every
    record_every. With exit_band the run stops the first time the statistic leaves the band.
    """
    if not 0 < dt <= MAX_DT:
        raise DomainError(f"dt must lie in (0, {MAX_DT}], got {dt}")
    if T < dt:
        raise DomainError(f"T must be >= dt, got T={T}, dt={dt}")

    ens = init_ensemble(positions, seed)
    steps = int(round(T / dt))
    every = max(1, int(round((record_every or dt) / dt)))
    started = clock.perf_counter()

    rec = SimulationRecord(t=[], stat=[], w1=[], weighted_ub=[], final=ens)

    def record(e: ParticleEnsemble, s) -> None:
        rec.t.append(e.time)
        rec.stat.append(s.tolist() if isinstance(s, np.ndarray) else s)
        if target is not None:
            rec.w1.append(w1_to(e, target))
            if metric is not None:
                rec.weighted_ub.append(weighted_distance_to(e, target, metric.V, metric.phi, validate=False))

    x = ens.positions
    s = _statistic(model, x)
    record(ens, s)
    taken = 0
    for k in range(steps):
        t = (k + 1) * dt
        x = _euler_update(model, x, s, dt, seed, k, t, tamed, antithetic)
        taken = k + 1
        s = _statistic(model, x)
        if exit_band is not None and not (exit_band[0] <= s <= exit_band[1]):
            rec.exit_time = t
            ens = ParticleEnsemble(positions=x, time=t, seed=seed, step_count=k + 1)
            record(ens, s)
            break
        if (k + 1) % every == 0 or k + 1 == steps:
            ens = ParticleEnsemble(positions=x, time=t, seed=seed, step_count=k + 1)
            record(ens, s)

    x.setflags(write=False)
    rec.final = ParticleEnsemble(positions=x, time=rec.t[-1], seed=seed, step_count=taken)
    logger.info(
        "Simulated %s particles for %s steps in %s",
        humanize_count(x.shape[0]), humanize_count(taken), humanize_seconds(clock.perf_counter() - started),
    )
    return rec


def run_and_fit(
    model: ModelSpec,
    init: Union[GridMeasure, float, np.ndarray],
    N: int,
    dt: float,
    T: float,
    seed: int,
    target: GridMeasure,
    tamed: bool = False,
) -> Tuple[RateFit, Dict[str, Any]]:
    """
    Simulate and fit the exponential decay of W1(empirical, target) on the window where the
    distance lies in [3 f, d0 / 2], f being the one-sample W1 of target at size N. The two-sample
    floor is reported alongside it; it runs about sqrt(2) times higher.

    init is a measure to sample from, a shift applied to the target quantiles, or explicit
    positions.
    """
    if N < 1000:
        raise DomainError(f"N must be >= 1000, got {N}")
    if T < 10 * dt:
        raise DomainError(f"T must be >= 10 dt, got T={T}, dt={dt}")

    if isinstance(init, GridMeasure):
        positions = initial_positions(init, N, seed, stratified=True)
    elif np.ndim(init) == 0:
        positions = initial_positions(target, N, seed, shift=float(init))
    else:
        positions = np.asarray(init, dtype=float)
        if positions.shape[0] != N:
            raise DomainError(f"expected {N} initial positions, got {positions.shape[0]}")

    interval = max(10 * dt, T / 200)
    rec = simulate(model, positions, dt, T, seed, record_every=interval, target=target, tamed=tamed)

    times = np.asarray(rec.t)
    dist = np.asarray(rec.w1)
    floor = two_sample_w1(target, N, seed)
    # the recorded distances are one-sample, so the window edge uses the one-sample floor
    sampling_floor = one_sample_w1(target, N, seed)
    d0 = float(dist[0])
    low, high = 3.0 * sampling_floor, d0 / 2.0

    # first contiguous stretch below d0/2 and above 3 sampling floors
    inside = (dist >= low) & (dist <= high)
    start = int(np.argmax(inside)) if inside.any() else None
    stop = start
    if start is not None:
        while stop + 1 < inside.size and inside[stop + 1]:
            stop += 1
    points = 0 if start is None else stop - start + 1

    diagnostics = {
        "d0": d0,
        "floor": floor,
        "sampling_floor": sampling_floor,
        "window_low": low,
        "window_high": high,
        "points": points,
        "final_distance": float(dist[-1]),
        "basin": LABEL_BASIN,
    }
    if points < 4:
        raise FitWindowError(
            MSG_FIT_WINDOW.format(d0=d0, floor=sampling_floor, low=low, high=high, points=points).strip(),
            diagnostics=diagnostics,
        )

    fit = fit_exponential(times, dist, (float(times[start]), float(times[stop])))
    logger.info("W1 decay rate %.4g (R^2 %.4f) on [%g, %g]", fit.rate, fit.r_squared, *fit.window)
    return fit, diagnostics


def _frozen_paths(model: ModelSpec, s: float, x0: np.ndarray, t: float, seed: int, dt: float, tangent: bool):
    """Euler paths of the frozen SDE dY = b(Y, s) dt + sigma dB, optionally with tangent flow and weight"""
    steps = max(1, int(math.ceil(t / dt)))
    h = t / steps
    root_h = math.sqrt(h)
    y = x0.copy()
    j = np.ones_like(y)
    weight = np.zeros_like(y)
    for k in range(steps):
        db = root_h * normals(seed, STREAM_BISMUT, k, y.shape)
        if tangent:
            j = j + model.drift_dx(y, s) * j * h
            # updated tangent is independent of db: the weight is unbiased for the Euler chain
            weight += j * db
            if not np.all(np.isfinite(j)) or np.max(np.abs(j)) > BLOWUP_THRESHOLD:
                raise DivergenceError(MSG_DIVERGED.format(time=(k + 1) * h, max_abs=float(np.max(np.abs(j)))), time=(k + 1) * h)
        y = y + model.drift(y, s) * h + model.sigma * db
        _guard(y, (k + 1) * h)
    return y, weight / model.sigma


def bismut_gradient(
    model: ModelSpec,
    s_frozen: float,
    f: Callable,
    x: float,
    v: float,
    t: float,
    paths: int,
    seed: int,
    dt: float = BISMUT_DT,
) -> Dict[str, float]:
    """
    Directional derivative v . grad P_t f(x) of the frozen semigroup by the Bismut formula
    (1/t) E[f(Y_t) int_0^t sigma^{-1} grad_v Y_r dB_r], with f(Y_t) centered by its sample mean.
    """
    if model.dim != 1:
        raise DomainError("the Bismut estimator is implemented for 1D models")
    if not t > 0:
        raise DomainError(f"t must be > 0, got {t}")
    if paths < 1000:
        raise DomainError(f"paths must be >= 1000, got {paths}")

    y, weight = _frozen_paths(model, s_frozen, np.full(paths, float(x)), t, seed, dt, tangent=True)
    fy = np.asarray(f(y), dtype=float) * np.ones_like(y)
    samples = (fy - np.mean(fy)) * weight * (v / t)
    return {
        "estimate": float(np.mean(samples)),
        "stderr": float(np.std(samples, ddof=1) / math.sqrt(paths)),
    }


def fd_oracle(
    model: ModelSpec,
    s_frozen: float,
    f: Callable,
    x: float,
    v: float,
    t: float,
    paths: int,
    seed: int,
    dt: float = BISMUT_DT,
    step_size: float = FD_STEP,
) -> Dict[str, float]:
    """Central difference of the Monte Carlo P_t f along v with common random numbers"""
    if model.dim != 1:
        raise DomainError("the finite-difference oracle is implemented for 1D models")
    plus, _ = _frozen_paths(model, s_frozen, np.full(paths, x + step_size * v), t, seed, dt, tangent=False)
    minus, _ = _frozen_paths(model, s_frozen, np.full(paths, x - step_size * v), t, seed, dt, tangent=False)
    samples = (np.asarray(f(plus), dtype=float) - np.asarray(f(minus), dtype=float)) / (2.0 * step_size)
    samples = samples * np.ones(paths)
    return {
        "estimate": float(np.mean(samples)),
        "stderr": float(np.std(samples, ddof=1) / math.sqrt(paths)),
    }


def bismut_check(model: ModelSpec, s_frozen: float, f: Callable, x: float, v: float, t: float, paths: int, seed: int) -> Dict[str, Any]:
    estimator = bismut_gradient(model, s_frozen, f, x, v, t, paths, seed)
    oracle = fd_oracle(model, s_frozen, f, x, v, t, paths, seed)
    combined = math.hypot(estimator["stderr"], oracle["stderr"])
    diff = estimator["estimate"] - oracle["estimate"]
    return {
        "estimate": estimator["estimate"],
        "stderr": estimator["stderr"],
        "fd_oracle": oracle["estimate"],
        "fd_stderr": oracle["stderr"],
        "zscore": diff / combined if combined > 0 else (0.0 if diff == 0 else math.inf),
    }
