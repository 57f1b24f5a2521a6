"""Transmit waveform, its Doppler companion, and convolution operators."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import DimensionError, ParameterError

RESAMPLE_HALF_TAPS = 15  # 31-tap kernel
RESAMPLE_KAISER_BETA = 6.0


@dataclass(frozen=True)
class WaveformSpec:
    """LFM pulse parameters (Hz and seconds)."""

    carrier_hz: float = 3000.0
    bandwidth_hz: float = 4000.0
    pulse_s: float = 0.025
    sample_hz: float = 15000.0

    def __post_init__(self):
        if not (self.sample_hz > 0 and self.bandwidth_hz > 0 and self.pulse_s > 0):
            raise ParameterError("sample_hz, bandwidth_hz and pulse_s must be positive")
        if self.carrier_hz - self.bandwidth_hz / 2 < 0:
            raise ParameterError("carrier_hz - bandwidth_hz/2 must be >= 0")

    @property
    def dt_s(self) -> float:
        return 1.0 / self.sample_hz

    @property
    def n_samples(self) -> int:
        return int(round(self.pulse_s * self.sample_hz))

    @property
    def start_hz(self) -> float:
        return self.carrier_hz - self.bandwidth_hz / 2

    @property
    def chirp_rate(self) -> float:
        """Sweep rate BW/T in Hz/s."""
        return self.bandwidth_hz / self.pulse_s

    def phase(self, t):
        """Instantaneous phase 2*pi*(f0 t + (BW/2T) t^2), ungated."""
        t = np.asarray(t, dtype=float)
        return 2.0 * np.pi * (self.start_hz * t + 0.5 * self.chirp_rate * t * t)

    def evaluate(self, t):
        """Continuous-time pulse s(t), zero outside [0, T)."""
        t = np.asarray(t, dtype=float)
        inside = (t >= 0.0) & (t < self.pulse_s)
        return np.where(inside, np.cos(self.phase(t)), 0.0)

    def derivative(self, t):
        """Analytic ds/dt, zero outside [0, T)."""
        t = np.asarray(t, dtype=float)
        inside = (t >= 0.0) & (t < self.pulse_s)
        dphase = 2.0 * np.pi * (self.start_hz + self.chirp_rate * t)
        return np.where(inside, -dphase * np.sin(self.phase(t)), 0.0)


@dataclass(frozen=True)
class SampledWaveform:
    samples: np.ndarray
    dt_s: float

    def __post_init__(self):
        arr = np.ascontiguousarray(self.samples, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise ParameterError("waveform must be a non-empty 1-D array")
        if not np.all(np.isfinite(arr)):
            raise ParameterError("waveform samples must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class ConvolutionOperator:
    """Zero-padded Toeplitz operator [X]_{n,l} = x[n - l], n < n_rows, l < n_lags.

    Only the kernel is stored; use :meth:`dense` in tests and oracles.
    """

    kernel: SampledWaveform
    n_rows: int
    n_lags: int

    def __post_init__(self):
        if self.n_rows < 1 or self.n_lags < 1:
            raise ParameterError("n_rows and n_lags must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, self.n_lags

    def apply(self, coeffs) -> np.ndarray:
        return toeplitz_apply(self, coeffs)

    def shifted(self, lag: int) -> np.ndarray:
        """Column ``lag`` of the operator."""
        col = np.zeros(self.n_rows)
        k = self.kernel.samples
        stop = min(k.size, self.n_rows - lag)
        if stop > 0:
            col[lag:lag + stop] = k[:stop]
        return col

    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for lag in range(self.n_lags):
            out[:, lag] = self.shifted(lag)
        return out


def generate_lfm(spec: WaveformSpec) -> SampledWaveform:
    """Up-sweep LFM from carrier - BW/2 with zero initial phase."""
    t = np.arange(spec.n_samples) * spec.dt_s
    return SampledWaveform(np.cos(spec.phase(t)), spec.dt_s)


def companion_waveform(spec: WaveformSpec) -> SampledWaveform:
    """u[n] = n dt * s'(n dt) with the analytic chirp derivative."""
    t = np.arange(spec.n_samples) * spec.dt_s
    return SampledWaveform(t * spec.derivative(t), spec.dt_s)


def toeplitz_apply(op: ConvolutionOperator, coeffs) -> np.ndarray:
    coeffs = np.ascontiguousarray(coeffs, dtype=float)
    if coeffs.shape != (op.n_lags,):
        raise DimensionError(f"expected {op.n_lags} coefficients, got {coeffs.shape}")
    return _accel.convolve_truncated(op.kernel.samples, coeffs, op.n_rows)


def delay(x, tau_samples: int, n_out: int | None = None) -> np.ndarray:
    """Integer-sample delay with zero fill, truncated/padded to ``n_out``."""
    x = np.asarray(x, dtype=float)
    if n_out is None:
        n_out = x.size + max(tau_samples, 0)
    out = np.zeros(n_out)
    lo = max(tau_samples, 0)
    src_lo = lo - tau_samples
    stop = min(n_out, tau_samples + x.size)
    if stop > lo:
        out[lo:stop] = x[src_lo:src_lo + stop - lo]
    return out


def linearized_scale(s: SampledWaveform, u: SampledWaveform, r: float,
                     tau_samples: int = 0, n_out: int | None = None) -> np.ndarray:
    """First-order wideband Doppler model s(t - tau) + r u(t - tau)."""
    if len(s) != len(u):
        raise DimensionError("s and u must have equal length")
    if abs(r) > 0.05:
        warnings.warn(f"log-scale r={r:g} is outside the small-Doppler regime", stacklevel=2)
    base = s.samples + r * u.samples if r != 0.0 else s.samples
    return delay(base, tau_samples, n_out)


def resample(x: SampledWaveform, beta: float, tau_s: float, n_out: int,
             half_taps: int = RESAMPLE_HALF_TAPS,
             kaiser_beta: float = RESAMPLE_KAISER_BETA) -> np.ndarray:
    """Band-limited evaluation of x(beta * (t - tau)) at t = n dt, n < n_out.

    Windowed-sinc (Kaiser) interpolation of the sampled sequence.  Pure
    integer delays at beta == 1 are returned exactly.
    """
    n = np.arange(n_out, dtype=float)
    positions = beta * (n - tau_s / x.dt_s)
    nearest = np.rint(positions)
    if np.all(np.abs(positions - nearest) < 1e-12):
        idx = nearest.astype(np.int64)
        ok = (idx >= 0) & (idx < len(x))
        out = np.zeros(n_out)
        out[ok] = x.samples[idx[ok]]
        return out
    return _accel.sinc_interp(x.samples, positions, half_taps, kaiser_beta)
