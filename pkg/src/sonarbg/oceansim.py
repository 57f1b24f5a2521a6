"""Parametric multipath channel simulator for an iso-velocity waveguide.

Arrivals come from the image method.  Every ping, each arrival receives a
log time-scale ``r_i = c_i + d`` (per-path plus common Doppler) and a small
amplitude random walk; the echo is rendered with the exact time-scaled
waveform via windowed-sinc interpolation, so a linearized tracker still faces
model error.

Two arrival shapes are supported.  ``point`` renders an ideal delayed and
scaled copy of the pulse.  ``diffuse`` (default) spreads each arrival over a
Gaussian lag cluster of the same width as the tracker's basis functions,
centred on the nearest basis centre for background arrivals, which models
rough-boundary scattering and keeps the background inside the span of the
delay dictionary.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import ChannelBasis
from .detect import TargetTrack
from .errors import ConfigError, DimensionError, ParameterError
from .signals import SampledWaveform, resample
from .tracker import PingRecord


class Scenario(str, enum.Enum):
    STATIC = "static"
    SURFACE_ONLY = "surface_only"
    SURFACE_AND_DRIFT = "surface_and_drift"

    @classmethod
    def parse(cls, value) -> "Scenario":
        if isinstance(value, cls):
            return value
        aliases = {"1": cls.STATIC, "2": cls.SURFACE_ONLY, "3": cls.SURFACE_AND_DRIFT,
                   "drift": cls.SURFACE_AND_DRIFT, "surface": cls.SURFACE_ONLY}
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ParameterError(f"unknown scenario {value!r}") from None


@dataclass(frozen=True)
class ScenarioConfig:
    """Environment, perturbation and target settings for one simulated run.

    The perturbation standard deviations are simulator calibration knobs;
    ``amp_walk_std`` is relative to each arrival's nominal amplitude.
    """

    scenario: str = "surface_and_drift"
    depth_m: float = 50.0
    range_m: float = 2000.0
    node_depth_m: float = 2.0
    sound_speed_mps: float = 1500.0
    n_paths: int = 6
    bottom_loss: float = 0.7
    surface_rate_std: float = 1.75e-4
    drift_rate_std: float = 3e-4
    amp_walk_std: float = 0.0
    n_pings: int = 100
    inr_db: float = 30.0
    snr_db: float = 10.0
    sigma_e2: float = 1.0
    seed: int = 0
    arrival_kernel: str = "diffuse"
    target_motion: str = "stationary"
    target_delay_s: float = 1.64e-3
    target_speed_mps: float = 5.0
    pri_s: float = 0.12
    crossing_ping: int | None = None
    onset: int = 41

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario).value)
        if min(self.depth_m, self.range_m, self.sound_speed_mps) <= 0:
            raise ParameterError("depth, range and sound speed must be positive")
        if not 0 <= self.node_depth_m < self.depth_m:
            raise ParameterError("node depth must lie inside the water column")
        if self.n_paths < 1 or self.n_pings < 1:
            raise ParameterError("n_paths and n_pings must be >= 1")
        if min(self.surface_rate_std, self.drift_rate_std, self.amp_walk_std) < 0:
            raise ParameterError("perturbation stds must be >= 0")
        if self.arrival_kernel not in ("diffuse", "point"):
            raise ParameterError(f"unknown arrival kernel {self.arrival_kernel!r}")
        if self.target_motion not in ("stationary", "crossing"):
            raise ParameterError(f"unknown target motion {self.target_motion!r}")
        if not 1 <= self.onset <= self.n_pings:
            raise ParameterError("onset must lie in [1, n_pings]")
        if self.sigma_e2 <= 0 or self.pri_s <= 0:
            raise ParameterError("sigma_e2 and pri_s must be positive")

    @property
    def kind(self) -> Scenario:
        return Scenario(self.scenario)

    @property
    def effective_surface_std(self) -> float:
        return 0.0 if self.kind is Scenario.STATIC else self.surface_rate_std

    @property
    def effective_drift_std(self) -> float:
        return self.drift_rate_std if self.kind is Scenario.SURFACE_AND_DRIFT else 0.0

    @property
    def effective_amp_walk_std(self) -> float:
        return 0.0 if self.kind is Scenario.STATIC else self.amp_walk_std


@dataclass(frozen=True, eq=False)
class ArrivalSet:
    """Multipath arrivals, delays relative to the direct path (window start)."""

    delays_s: np.ndarray
    amplitudes: np.ndarray
    log_scales: np.ndarray
    nominal_amplitudes: np.ndarray
    surface_bounces: np.ndarray
    bottom_bounces: np.ndarray
    reference_s: float = 0.0

    def __len__(self) -> int:
        return self.delays_s.size

    @property
    def absolute_delays_s(self) -> np.ndarray:
        return self.delays_s + self.reference_s

    @property
    def betas(self) -> np.ndarray:
        return np.exp(self.log_scales)

    def scaled(self, gain: float) -> "ArrivalSet":
        return replace(self, amplitudes=self.amplitudes * gain,
                       nominal_amplitudes=self.nominal_amplitudes * gain)


def image_method_arrivals(cfg: ScenarioConfig) -> ArrivalSet:
    """First ``cfg.n_paths`` image-method arrivals, sorted by delay.

    Amplitude is spherical spreading times -1 per surface bounce and
    ``bottom_loss`` per bottom bounce.
    """
    D, zs, zr = cfg.depth_m, cfg.node_depth_m, cfg.node_depth_m
    paths = []  # (vertical separation, surface bounces, bottom bounces)
    m = 0
    while len(paths) < cfg.n_paths + 4 or m < 2:
        paths.append((abs(2 * m * D + zr - zs), m, m))
        paths.append((2 * m * D + zr + zs, m + 1, m))
        paths.append((2 * (m + 1) * D - zr - zs, m, m + 1))
        paths.append((2 * (m + 1) * D - zr + zs, m + 1, m + 1))
        m += 1
    slant = np.array([math.hypot(cfg.range_m, v) for v, _, _ in paths])
    n_s = np.array([p[1] for p in paths])
    n_b = np.array([p[2] for p in paths])
    order = np.argsort(slant, kind="stable")[: cfg.n_paths]
    slant, n_s, n_b = slant[order], n_s[order], n_b[order]
    delays = slant / cfg.sound_speed_mps
    amps = (-1.0) ** n_s * cfg.bottom_loss**n_b / slant
    ref = delays[0]
    return ArrivalSet(delays - ref, amps, np.zeros_like(amps), amps.copy(), n_s, n_b, float(ref))


def evolve_ping(arrivals: ArrivalSet, cfg: ScenarioConfig, k: int, rng) -> ArrivalSet:
    """Draw ping ``k``'s log time-scales and step the amplitude walk.

    The same number of normal draws is consumed in every scenario, so runs
    that differ only in their perturbation stds share random numbers.
    """
    if k < 1:
        raise ParameterError("ping index must be >= 1")
    n = len(arrivals)
    z = rng.standard_normal(1 + 2 * n)
    d = cfg.effective_drift_std * z[0]
    c = cfg.effective_surface_std * z[1:n + 1]
    nominal = arrivals.nominal_amplitudes
    amps = arrivals.amplitudes + cfg.effective_amp_walk_std * np.abs(nominal) * z[n + 1:]
    # keep every arrival's sign and at least 0.1% of its nominal size
    floor = 1e-3 * np.abs(nominal)
    amps = np.sign(nominal) * np.maximum(amps * np.sign(nominal), floor)
    return replace(arrivals, amplitudes=amps, log_scales=c + d)


def gaussian_cluster(center_lag: float, scale_lags: float, n_lags: int | None = None) -> np.ndarray:
    """Lag weights exp(-(l - center)^2 / (2 scale^2)) for l = 0 .. n_lags-1."""
    if n_lags is None:
        n_lags = int(math.ceil(center_lag + 8.0 * scale_lags)) + 1
    lags = np.arange(max(n_lags, 1), dtype=float)
    return np.exp(-((lags - center_lag) ** 2) / (2.0 * scale_lags**2))


def render_cluster(s: SampledWaveform, weights, beta: float, n_rows: int) -> np.ndarray:
    """Sum over lags l of weights[l] * s(beta * (t - l dt / beta)) sampled at t = n dt.

    Each sub-path is time-scaled about the window start, so its delay in the
    scaled form is ``l dt / beta``.
    """
    c = np.convolve(s.samples, np.asarray(weights, dtype=float))
    return resample(SampledWaveform(c, s.dt_s), beta, 0.0, n_rows)


class ChannelSimulator:
    """Renders pings for a fixed waveform, window length and delay dictionary.

    ``basis`` is needed for ``diffuse`` arrivals (cluster centres and width).
    """

    def __init__(self, s: SampledWaveform, n_rows: int, basis: ChannelBasis | None = None):
        self.s = s
        self.n_rows = n_rows
        self.basis = basis
        self.dt_s = s.dt_s

    def _check_delay(self, delay_s: float):
        if delay_s < -1e-12 or delay_s >= self.n_rows * self.dt_s:
            raise ConfigError(f"arrival at {delay_s:.6g} s falls outside the "
                              f"{self.n_rows}-sample window")

    def _cluster(self, delay_s: float, snap: bool):
        b = self.basis
        if b is None:
            raise ConfigError("diffuse arrivals need a channel basis")
        scale = b.scale_s / self.dt_s
        if snap:
            return b.B[:, b.nearest_center(delay_s)]
        return gaussian_cluster(delay_s / self.dt_s, scale)

    def render_arrival(self, delay_s: float, amplitude: float, log_scale: float,
                       kernel: str, snap: bool = True) -> np.ndarray:
        self._check_delay(delay_s)
        beta = math.exp(log_scale)
        if kernel == "point":
            return amplitude * resample(self.s, beta, delay_s / beta, self.n_rows)
        return amplitude * render_cluster(self.s, self._cluster(delay_s, snap), beta, self.n_rows)

    def render_background(self, arrivals: ArrivalSet, kernel: str = "diffuse") -> np.ndarray:
        out = np.zeros(self.n_rows)
        for tau, a, r in zip(arrivals.delays_s, arrivals.amplitudes, arrivals.log_scales):
            out += self.render_arrival(float(tau), float(a), float(r), kernel, snap=True)
        return out

    def render_ping(self, arrivals: ArrivalSet, k: int, rng, sigma_e2: float = 1.0,
                    track: TargetTrack | None = None, kernel: str = "diffuse") -> PingRecord:
        y = self.render_background(arrivals, kernel)
        if track is not None:
            y = y + track.waveform(k)
        y = y + math.sqrt(sigma_e2) * rng.standard_normal(self.n_rows)
        return PingRecord(y, k)

    def target_templates(self, delays_s, betas, kernel: str = "diffuse") -> np.ndarray:
        """Unit-amplitude target echoes, one row per ping."""
        rows = []
        for tau, beta in zip(delays_s, betas):
            self._check_delay(float(tau))
            if kernel == "point":
                rows.append(resample(self.s, beta, tau / beta, self.n_rows))
            else:
                w = self._cluster(float(tau), snap=False)
                rows.append(render_cluster(self.s, w, beta, self.n_rows))
        return np.vstack(rows)


def scale_to_inr_snr(x_b, x_o, sigma_e2: float, inr_db, snr_db) -> tuple[float, float]:
    """Gains putting ``x_b`` at the requested INR and ``x_o`` at the requested SNR.

    A level of ``None`` or ``-inf`` gives a zero gain.
    """

    def _gain(x, level):
        if level is None or level == -math.inf:
            return 0.0
        x = np.asarray(x, dtype=float)
        energy = float(x @ x)
        if energy == 0.0:
            raise ParameterError("cannot scale a zero-energy vector to a finite level")
        return math.sqrt(10.0 ** (level / 10.0) * x.size * sigma_e2 / energy)

    return _gain(x_b, inr_db), _gain(x_o, snr_db)


def measured_ratio_db(x, sigma_e2: float) -> float:
    x = np.asarray(x, dtype=float)
    return 10.0 * math.log10(float(x @ x) / (x.size * sigma_e2))


def target_delays(motion: str, cfg: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-ping excess delays and time-scale factors of the target echo.

    ``crossing`` moves the target perpendicular to the baseline through its
    midpoint at ``target_speed_mps``, crossing at ``crossing_ping``.
    """
    k = np.arange(1, cfg.n_pings + 1, dtype=float)
    if motion == "stationary":
        return np.full(k.size, cfg.target_delay_s), np.ones(k.size)
    if motion != "crossing":
        raise ParameterError(f"unknown target motion {motion!r}")
    k_cross = cfg.crossing_ping if cfg.crossing_ping is not None else min(cfg.onset + 30,
                                                                          cfg.n_pings)
    half = 0.5 * cfg.range_m

    def excess(kk):
        y = cfg.target_speed_mps * cfg.pri_s * (kk - k_cross)
        return (2.0 * np.hypot(half, y) - cfg.range_m) / cfg.sound_speed_mps

    tau = excess(k)
    eta = (excess(k + 1) - excess(k - 1)) / (2.0 * cfg.pri_s)
    return tau, 1.0 - eta


def make_target_track(motion: str, cfg: ScenarioConfig, sim: ChannelSimulator,
                      onset: int | None = None, amplitude: float = 1.0) -> TargetTrack:
    onset = cfg.onset if onset is None else onset
    if not 1 <= onset <= cfg.n_pings:
        raise ParameterError("onset must lie in [1, n_pings]")
    tau, beta = target_delays(motion, cfg)
    templates = amplitude * sim.target_templates(tau, beta, cfg.arrival_kernel)
    templates.setflags(write=False)
    return TargetTrack(onset, np.full(tau.size, amplitude), tau, beta, templates)


@dataclass(eq=False)
class SimulatedRun:
    """One background realization; the target is added on demand.

    Keeping background, noise and unit target apart lets several SNR levels
    share the same channel and noise draws.
    """

    background: np.ndarray
    noise: np.ndarray
    unit_track: TargetTrack
    background_gain: float
    sigma_e2: float
    arrivals: list = field(default_factory=list, repr=False)

    @property
    def n_pings(self) -> int:
        return self.background.shape[0]

    def target_gain(self, snr_db) -> float:
        ref = self.unit_track.template(self.unit_track.onset)
        return scale_to_inr_snr(None, ref, self.sigma_e2, None, snr_db)[1]

    def track(self, snr_db) -> TargetTrack:
        return self.unit_track.scaled(self.target_gain(snr_db))

    def pings(self, snr_db=None, target: bool = True) -> np.ndarray:
        y = self.background + self.noise
        if target and snr_db is not None and snr_db != -math.inf:
            tr = self.track(snr_db)
            y = y.copy()
            y[tr.onset - 1:] += tr.templates[tr.onset - 1:]
        return y

    def records(self, snr_db=None, target: bool = True, first: int = 1, last: int | None = None):
        y = self.pings(snr_db, target)
        last = self.n_pings if last is None else last
        return [PingRecord(y[k - 1], k) for k in range(first, last + 1)]


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key...), e.g. (master, cell, trial, stream)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


def simulate_run(cfg: ScenarioConfig, sim: ChannelSimulator, trial: int = 0) -> SimulatedRun:
    """Simulate ``cfg.n_pings`` pings of background plus noise for one trial."""
    rng_chan = rng_for(cfg.seed, trial, 1)
    rng_noise = rng_for(cfg.seed, trial, 2)
    base = image_method_arrivals(cfg)
    nominal = sim.render_background(base, cfg.arrival_kernel)
    g_b, _ = scale_to_inr_snr(nominal, None, cfg.sigma_e2, cfg.inr_db, None)
    arrivals = base.scaled(g_b)
    bg = np.empty((cfg.n_pings, sim.n_rows))
    history = []
    for k in range(1, cfg.n_pings + 1):
        arrivals = evolve_ping(arrivals, cfg, k, rng_chan)
        history.append(arrivals)
        bg[k - 1] = sim.render_background(arrivals, cfg.arrival_kernel)
    noise = math.sqrt(cfg.sigma_e2) * rng_noise.standard_normal((cfg.n_pings, sim.n_rows))
    track = make_target_track(cfg.target_motion, cfg, sim)
    return SimulatedRun(bg, noise, track, g_b, cfg.sigma_e2, history)


def write_ping_file(path, pings, dt_s: float) -> Path:
    """CSV with a header row ``N,dt_s,n_pings``, its values, then one row per ping."""
    pings = np.atleast_2d(np.asarray(pings, dtype=float))
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "dt_s", "n_pings"])
        w.writerow([pings.shape[1], repr(float(dt_s)), pings.shape[0]])
        for row in pings:
            w.writerow([repr(float(v)) for v in row])
    return path


def read_ping_file(path) -> tuple[np.ndarray, float]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or rows[0] != ["N", "dt_s", "n_pings"]:
        raise ConfigError(f"{path}: not a ping file")
    n, dt, n_pings = int(rows[1][0]), float(rows[1][1]), int(rows[1][2])
    data = np.array([[float(v) for v in r] for r in rows[2:]], dtype=float)
    if data.shape != (n_pings, n):
        raise DimensionError(f"{path}: expected {n_pings}x{n} samples, got {data.shape}")
    return data, dt


__all__ = [
    "ArrivalSet", "ChannelSimulator", "Scenario", "ScenarioConfig", "SimulatedRun",
    "evolve_ping", "gaussian_cluster", "image_method_arrivals", "make_target_track",
    "measured_ratio_db", "read_ping_file", "render_cluster", "rng_for", "scale_to_inr_snr",
    "simulate_run", "target_delays", "write_ping_file",
]
