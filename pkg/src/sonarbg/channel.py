"""Gaussian delay basis, heteroscedastic covariance models, measurement model.

The background at one ping is ``y = H theta + v`` with ``H = S B`` and
``v ~ N(0, R(theta))``; ``R`` is one of four structures (``CovarianceModelKind``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _accel
from .errors import DimensionError, ParameterError
from .signals import ConvolutionOperator, toeplitz_apply

BASIS_SCALE_FACTOR = 0.42  # sigma_m = 0.42 / BW
ACTIVE_LAG_RTOL = 1e-12


class CovarianceModelKind(str, enum.Enum):
    M0 = "m0"
    MC = "mc"
    MD = "md"
    MCD = "mcd"

    @property
    def has_c(self) -> bool:
        return self in (CovarianceModelKind.MC, CovarianceModelKind.MCD)

    @property
    def has_d(self) -> bool:
        return self in (CovarianceModelKind.MD, CovarianceModelKind.MCD)

    @property
    def extra_params(self) -> int:
        """Number of variances beyond sigma_q^2 (degrees of freedom vs M0)."""
        return int(self.has_c) + int(self.has_d)

    @property
    def param_names(self) -> tuple[str, ...]:
        names = ["sigma_q2"]
        if self.has_c:
            names.append("sigma_c2")
        if self.has_d:
            names.append("sigma_d2")
        return tuple(names)

    @classmethod
    def parse(cls, value) -> "CovarianceModelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ParameterError(f"unknown covariance model {value!r}") from None

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Hyperparams:
    """Process, per-path Doppler, common Doppler and ambient noise variances."""

    sigma_q2: float
    sigma_c2: float = 0.0
    sigma_d2: float = 0.0
    sigma_e2: float = 1.0

    def __post_init__(self):
        for name in ("sigma_q2", "sigma_c2", "sigma_d2", "sigma_e2"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ParameterError(f"{name} must be finite and >= 0, got {v!r}")
        if self.sigma_e2 <= 0:
            raise ParameterError("sigma_e2 must be > 0")

    def restricted(self, kind: CovarianceModelKind) -> "Hyperparams":
        """Copy with the variances ``kind`` does not use set to zero."""
        return Hyperparams(
            self.sigma_q2,
            self.sigma_c2 if kind.has_c else 0.0,
            self.sigma_d2 if kind.has_d else 0.0,
            self.sigma_e2,
        )

    def as_dict(self) -> dict:
        return {"sigma_q2": self.sigma_q2, "sigma_c2": self.sigma_c2,
                "sigma_d2": self.sigma_d2, "sigma_e2": self.sigma_e2}


@dataclass(frozen=True, eq=False)
class ChannelBasis:
    n_lags: int
    n_basis: int
    centers_s: np.ndarray
    scale_s: float
    B: np.ndarray
    H: np.ndarray
    dt_s: float

    @property
    def centers_lag(self) -> np.ndarray:
        """Basis centers in (fractional) lag units."""
        return self.centers_s / self.dt_s

    def nearest_center(self, delay_s: float) -> int:
        return int(np.argmin(np.abs(self.centers_s - delay_s)))


def basis_centers(dt_s: float, n_lags: int, n_basis: int, placement: str = "midpoint") -> np.ndarray:
    span = n_lags * dt_s
    if placement == "midpoint":
        return (np.arange(n_basis) + 0.5) * (span / n_basis)
    if placement == "endpoints":
        if n_basis == 1:
            return np.array([0.0])
        return np.linspace(0.0, (n_lags - 1) * dt_s, n_basis)
    raise ParameterError(f"unknown center placement {placement!r}")


def build_basis(dt_s: float, n_lags: int, n_basis: int, bandwidth_hz: float,
                s_op: ConvolutionOperator, placement: str = "midpoint") -> ChannelBasis:
    if n_basis > n_lags or n_basis < 1:
        raise ParameterError(f"need 1 <= n_basis <= n_lags, got {n_basis} > {n_lags}")
    if bandwidth_hz <= 0:
        raise ParameterError("bandwidth_hz must be positive")
    if s_op.n_lags != n_lags:
        raise DimensionError("operator lag count does not match n_lags")
    scale = BASIS_SCALE_FACTOR / bandwidth_hz
    centers = basis_centers(dt_s, n_lags, n_basis, placement)
    lags = np.arange(n_lags) * dt_s
    B = np.exp(-((lags[:, None] - centers[None, :]) ** 2) / (2.0 * scale**2))
    H = np.column_stack([toeplitz_apply(s_op, B[:, m]) for m in range(n_basis)])
    for arr in (B, H, centers):
        arr.setflags(write=False)
    return ChannelBasis(n_lags, n_basis, centers, scale, B, H, dt_s)


def amplitudes_from_state(basis: ChannelBasis, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (basis.n_basis,):
        raise DimensionError(f"theta must have length {basis.n_basis}")
    return basis.B @ theta


def _active_lags(a: np.ndarray) -> np.ndarray:
    amax = np.max(np.abs(a)) if a.size else 0.0
    if amax == 0.0:
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(np.abs(a) > ACTIVE_LAG_RTOL * amax)


def covariance(kind, hp: Hyperparams, basis: ChannelBasis, u_op: ConvolutionOperator,
               theta) -> np.ndarray:
    """Dense measurement covariance R(theta) for the given model (N x N)."""
    kind = CovarianceModelKind.parse(kind)
    a = amplitudes_from_state(basis, theta)
    n = u_op.n_rows
    R = hp.sigma_e2 * np.eye(n)
    if kind.has_c and hp.sigma_c2 > 0:
        w = np.zeros_like(a)
        idx = _active_lags(a)
        w[idx] = a[idx] ** 2
        R += hp.sigma_c2 * _accel.lagged_outer_sum(u_op.kernel.samples, w, n)
    if kind.has_d and hp.sigma_d2 > 0:
        g = toeplitz_apply(u_op, a)
        R += hp.sigma_d2 * np.outer(g, g)
    return R


def toeplitz_adjoint(op: ConvolutionOperator, z) -> np.ndarray:
    """X^T z for the zero-padded Toeplitz operator X."""
    z = np.asarray(z, dtype=float)
    if z.shape != (op.n_rows,):
        raise DimensionError(f"expected length {op.n_rows}, got {z.shape}")
    k = op.kernel.samples
    zpad = np.concatenate((z, np.zeros(k.size)))
    windows = np.lib.stride_tricks.sliding_window_view(zpad, k.size)[: op.n_lags]
    return windows @ k


@dataclass(frozen=True)
class PingStats:
    """Sufficient statistics of one (offset-corrected) ping ``z``."""

    zz: float
    Hz: np.ndarray
    Jz: np.ndarray
    Uz: np.ndarray


class MeasurementModel:
    """Basis plus S/U operators, with cached Gram matrices.

    ``J = U B`` maps the state to the common-Doppler direction ``g = U B theta``.
    """

    def __init__(self, basis: ChannelBasis, s_op: ConvolutionOperator, u_op: ConvolutionOperator):
        if s_op.shape != u_op.shape:
            raise DimensionError("S and U operators must have equal shape")
        if basis.H.shape[0] != s_op.n_rows or basis.n_lags != s_op.n_lags:
            raise DimensionError("basis does not match operators")
        self.basis = basis
        self.s_op = s_op
        self.u_op = u_op

    @property
    def n_rows(self) -> int:
        return self.s_op.n_rows

    @property
    def n_basis(self) -> int:
        return self.basis.n_basis

    @property
    def H(self) -> np.ndarray:
        return self.basis.H

    @cached_property
    def J(self) -> np.ndarray:
        B = self.basis.B
        return np.column_stack([toeplitz_apply(self.u_op, B[:, m]) for m in range(B.shape[1])])

    @cached_property
    def StU(self) -> np.ndarray:
        return _accel.lagged_gram(self.s_op.kernel.samples, self.u_op.kernel.samples,
                                  self.n_rows, self.s_op.n_lags)

    @cached_property
    def UtU(self) -> np.ndarray:
        G = _accel.lagged_gram(self.u_op.kernel.samples, self.u_op.kernel.samples,
                               self.n_rows, self.u_op.n_lags)
        return 0.5 * (G + G.T)

    @cached_property
    def HtH(self) -> np.ndarray:
        H = self.H
        return H.T @ H

    @cached_property
    def HtJ(self) -> np.ndarray:
        return self.H.T @ self.J

    @cached_property
    def JtJ(self) -> np.ndarray:
        J = self.J
        return J.T @ J

    @cached_property
    def HtU(self) -> np.ndarray:
        return self.basis.B.T @ self.StU

    @cached_property
    def JtU(self) -> np.ndarray:
        return self.basis.B.T @ self.UtU

    def stats(self, z) -> PingStats:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n_rows,):
            raise DimensionError(f"ping length {z.shape} != ({self.n_rows},)")
        B = self.basis.B
        Sz = toeplitz_adjoint(self.s_op, z)
        Uz = toeplitz_adjoint(self.u_op, z)
        return PingStats(float(z @ z), B.T @ Sz, B.T @ Uz, Uz)

    def covariance(self, kind, hp: Hyperparams, theta) -> np.ndarray:
        return covariance(kind, hp, self.basis, self.u_op, theta)


def build_model(s, u, n_rows: int, n_lags: int, n_basis: int, bandwidth_hz: float,
                placement: str = "midpoint") -> MeasurementModel:
    """Convenience constructor from sampled s and u waveforms."""
    s_op = ConvolutionOperator(s, n_rows, n_lags)
    u_op = ConvolutionOperator(u, n_rows, n_lags)
    basis = build_basis(s.dt_s, n_lags, n_basis, bandwidth_hz, s_op, placement)
    return MeasurementModel(basis, s_op, u_op)
