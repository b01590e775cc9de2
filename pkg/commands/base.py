"""
Shared experiment configuration and helpers for the subcommands
"""
import argparse
import logging
import os
import pathlib
import re
from typing import Any, Dict, Optional, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import (
    DEFAULT_BASIS_SIZE,
    DEFAULT_DT,
    DEFAULT_HORIZON,
    DEFAULT_PANELS,
    DEFAULT_PARTICLES,
    DEFAULT_SEED,
    MVLAB_CONFIG,
    MVLAB_OUT_DIR,
    MVLAB_THREADS,
)
from services.fixed_point_service import ROOT_CHOICES, find_roots, select_root, solve_pair
from services.model_service import ModelName, ModelSpec, make_model
from services.metric_service import METRIC_NAMES
from utils.errors import ConfigError

logger = logging.getLogger(__name__)


class ExperimentConfig(BaseModel):
    """Flat experiment parameters; every key may come from the config file or a CLI flag"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    model: str = "dawson"
    beta: float = 1.0
    sigma: float = Field(0.5, gt=0)
    basis_size: int = Field(DEFAULT_BASIS_SIZE, ge=2, le=200)
    panels: int = Field(DEFAULT_PANELS, ge=8, le=4096)
    truncation: Optional[float] = Field(None, gt=0)

    # stationary roots
    root: str = "stable"
    m: Optional[float] = None
    interval_lo: float = -3.0
    interval_hi: float = 3.0
    grid: int = Field(64, ge=32, le=100_000)
    sigma_min: float = Field(0.2, gt=0)
    sigma_max: float = Field(3.0, gt=0)
    steps: int = Field(16, ge=8, le=10_000)

    # semigroup checks
    t: float = Field(1.0, gt=0)
    substeps: int = Field(64, ge=8)
    window_lo: float = Field(2.0, ge=0)
    window_hi: float = Field(6.0, gt=0)

    # particles
    N: int = Field(DEFAULT_PARTICLES, ge=1000)
    dt: float = Field(DEFAULT_DT, gt=0, le=0.1)
    T: float = Field(DEFAULT_HORIZON, gt=0)
    seed: int = Field(DEFAULT_SEED, ge=0)
    seeds: int = Field(10, ge=1, le=1000)
    shift: float = 0.1
    tamed: bool = False
    antithetic: bool = False
    metric: Optional[str] = None
    p: float = Field(1.0, ge=1.0)

    # Bismut check
    paths: int = Field(200_000, ge=1000)
    x: Optional[float] = None
    v: float = 1.0

    out_dir: str = MVLAB_OUT_DIR
    threads: int = Field(MVLAB_THREADS, ge=0)

    @field_validator("model")
    @classmethod
    def _known_model(cls, value: str) -> str:
        return ModelName.parse(value).value

    @field_validator("root")
    @classmethod
    def _known_root(cls, value: str) -> str:
        if value not in ROOT_CHOICES:
            raise ValueError(f"root must be one of {ROOT_CHOICES}")
        return value

    @field_validator("metric")
    @classmethod
    def _known_metric(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and value not in METRIC_NAMES:
            raise ValueError(f"metric must be one of {METRIC_NAMES}")
        return value

    @field_validator("substeps")
    @classmethod
    def _even(cls, value: int) -> int:
        if value % 2:
            raise ValueError("substeps must be even")
        return value

    @model_validator(mode="after")
    def _ranges(self) -> "ExperimentConfig":
        if self.interval_hi <= self.interval_lo:
            raise ValueError("interval_hi must exceed interval_lo")
        if self.sigma_max <= self.sigma_min:
            raise ValueError("sigma_max must exceed sigma_min")
        if self.window_hi <= self.window_lo:
            raise ValueError("window_hi must exceed window_lo")
        if self.T < 10 * self.dt:
            raise ValueError("T must be at least 10 dt")
        return self

    @property
    def interval(self) -> Tuple[float, float]:
        return self.interval_lo, self.interval_hi

    @property
    def workers(self) -> int:
        return self.threads or os.cpu_count() or 1


FIELD_NAMES = {name.lower(): name for name in ExperimentConfig.model_fields}


def _line_of(path: pathlib.Path, key: str) -> Optional[int]:
    pattern = re.compile(rf"^\s*(export\s+)?{re.escape(key)}\s*=", re.IGNORECASE)
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if pattern.match(line):
            return number
    return None


def read_config_file(path: "str | pathlib.Path") -> Dict[str, Any]:
    """Flat key=value file; keys are matched to config fields case-insensitively"""
    path = pathlib.Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = dotenv_values(path)
    values: Dict[str, Any] = {}
    for key, value in raw.items():
        if value is None:
            raise ConfigError("missing value", key=key, line=_line_of(path, key))
        values[FIELD_NAMES.get(key.lower(), key)] = value
    return values


def load_config(
    overrides: Dict[str, Any],
    config_path: Optional[str] = None,
    preset: Optional[Dict[str, Any]] = None,
) -> ExperimentConfig:
    """
    Defaults < example preset < config file < CLI overrides. Validation failures become ConfigError with the
    offending key and, for file values, its line.
    """
    path = config_path or MVLAB_CONFIG or None
    file_values = read_config_file(path) if path else {}
    merged = {**(preset or {}), **file_values, **{k: v for k, v in overrides.items() if v is not None}}
    try:
        return ExperimentConfig(**merged)
    except ValidationError as e:
        first = e.errors()[0]
        key = str(first["loc"][0]) if first.get("loc") else None
        line = None
        if path and key is not None and key in file_values and key not in overrides:
            line = _line_of(pathlib.Path(path), key)
        raise ConfigError(first["msg"], key=key, line=line) from e


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    """One flag per config field; absent flags leave file/default values alone"""
    suppress = argparse.SUPPRESS
    parser.add_argument("--config", dest="config_path", default=suppress, help="flat key=value config file")
    parser.add_argument("--model", default=suppress, help=f"one of {[m.value for m in ModelName]}")
    for name, kind in (
        ("beta", float), ("sigma", float), ("basis_size", int), ("panels", int), ("truncation", float),
        ("m", float), ("interval_lo", float), ("interval_hi", float), ("grid", int),
        ("sigma_min", float), ("sigma_max", float), ("steps", int),
        ("t", float), ("substeps", int), ("window_lo", float), ("window_hi", float),
        ("N", int), ("dt", float), ("T", float), ("seed", int), ("seeds", int), ("shift", float),
        ("p", float), ("paths", int), ("x", float), ("v", float), ("threads", int),
    ):
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind, default=suppress)
    parser.add_argument("--root", default=suppress, choices=ROOT_CHOICES)
    parser.add_argument("--metric", default=suppress, choices=METRIC_NAMES)
    parser.add_argument("--out-dir", dest="out_dir", default=suppress)
    parser.add_argument("--tamed", action="store_true", default=suppress)
    parser.add_argument("--antithetic", action="store_true", default=suppress)


def build_model(cfg: ExperimentConfig) -> ModelSpec:
    return make_model(cfg.model, cfg.beta, cfg.sigma)


def stationary_point(cfg: ExperimentConfig, model: Optional[ModelSpec] = None) -> Tuple[ModelSpec, Any]:
    """The statistic value to linearize at: the configured m, or the selected root"""
    model = model or build_model(cfg)
    if model.dim == 2:
        pair = solve_pair(model, truncation=cfg.truncation, panels=cfg.panels)
        return model, pair["m"]
    if cfg.m is not None:
        return model, cfg.m
    roots = find_roots(model, cfg.interval, cfg.grid, cfg.truncation, cfg.panels)
    return model, select_root(roots, cfg.root).m
