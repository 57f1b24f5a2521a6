"""Experiment configuration: dataclasses plus strict YAML loading."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from ..channel import CovarianceModelKind
from ..errors import ConfigError, ParameterError
from ..oceansim import ScenarioConfig
from ..signals import WaveformSpec


@dataclass(frozen=True)
class DimsConfig:
    """Window length N, lag count N_l and basis size M."""

    n_rows: int = 512
    n_lags: int = 128
    n_basis: int = 64
    placement: str = "midpoint"

    def __post_init__(self):
        if min(self.n_rows, self.n_lags, self.n_basis) < 1:
            raise ParameterError("dimensions must be positive")
        if self.n_basis > self.n_lags:
            raise ParameterError("n_basis must not exceed n_lags")


@dataclass(frozen=True)
class ExperimentConfig:
    waveform: WaveformSpec = field(default_factory=WaveformSpec)
    dims: DimsConfig = field(default_factory=DimsConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    models: tuple = ("m0", "md")
    snr_grid_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
    inr_db: float = 30.0
    n_mc: int = 200
    n_calibration: int | None = None
    train_pings: int = 40
    onset: int = 41
    alpha: float = 0.05
    pfa: float = 0.05
    h0: float = 0.0
    reference_snr_db: float = 10.0
    significance_inr_grid_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    significance_replicates: int = 1
    master_seed: int = 0
    workers: int = 1
    output_dir: str = "results"

    def __post_init__(self):
        models = tuple(CovarianceModelKind.parse(m).value for m in self.models)
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "snr_grid_db", tuple(float(x) for x in self.snr_grid_db))
        object.__setattr__(self, "significance_inr_grid_db",
                           tuple(float(x) for x in self.significance_inr_grid_db))
        if not models or not self.snr_grid_db:
            raise ConfigError("models and snr_grid_db must be nonempty")
        if not 1 <= self.train_pings < self.onset <= self.scenario.n_pings:
            raise ConfigError("need 1 <= train_pings < onset <= n_pings")
        if self.n_mc < 1 or self.calibration_trials * self.pfa < 1 - 1e-12:
            raise ConfigError("n_mc must be >= 1 and calibration needs >= 1/pfa trials")
        if not (0 < self.alpha <= 1 and 0 < self.pfa <= 1):
            raise ConfigError("alpha and pfa must lie in (0, 1]")
        if self.h0 > 0:
            raise ConfigError("h0 must be <= 0")
        if self.workers < 1 or self.significance_replicates < 1:
            raise ConfigError("workers and significance_replicates must be >= 1")
        if self.dims.n_rows * self.waveform.dt_s <= self.scenario.target_delay_s:
            raise ConfigError("target delay lies outside the window")

    @property
    def calibration_trials(self) -> int:
        return self.n_calibration if self.n_calibration is not None else self.n_mc

    @property
    def kinds(self) -> list[CovarianceModelKind]:
        return [CovarianceModelKind(m) for m in self.models]

    def scenario_for(self, **overrides) -> ScenarioConfig:
        """Scenario with the experiment-level INR, onset and seed applied."""
        base = dict(inr_db=self.inr_db, onset=self.onset, seed=self.master_seed)
        base.update(overrides)
        return dataclasses.replace(self.scenario, **base)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if dataclasses.is_dataclass(v):
                v = dataclasses.asdict(v)
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


_SECTIONS = {"waveform": WaveformSpec, "dims": DimsConfig, "scenario": ScenarioConfig}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict | None) -> ExperimentConfig:
    data = dict(data or {})
    kw = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            kw[name] = _build(cls, data.pop(name) or {}, name)
    for key in ("snr_grid_db", "significance_inr_grid_db", "models"):
        if key in data and not isinstance(data[key], (list, tuple)):
            raise ConfigError(f"{key}: expected a list")
    for key in ("snr_grid_db", "significance_inr_grid_db"):
        if key in data:
            data[key] = [_db(v) for v in data[key]]
    kw.update(data)
    return _build(ExperimentConfig, kw, "config")


def _db(v) -> float:
    if isinstance(v, str) and v.strip().lower() in ("-inf", "-.inf"):
        return -math.inf
    return float(v)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return config_from_dict(data)


def dump_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
    return path
