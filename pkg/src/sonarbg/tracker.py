"""Plug-in EKF over the basis coefficients with state-dependent covariance.

Two numerically equivalent update paths are provided:

``dense``
    forms the N x N innovation covariance, factors it once (Cholesky) and
    reuses the factor for the gain, quadratic form and log-determinant.

``gram``
    works from per-ping sufficient statistics and precomputed Gram matrices
    of ``H`` and the Doppler directions (Woodbury identity and determinant
    lemma).  The cost is independent of N for M0 and Md, which is what makes
    marginal-likelihood fitting affordable.

Log-likelihood increments omit the ``-(N/2) log 2 pi`` constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.linalg.lapack import dpotrf, dpotrs

from .channel import (CovarianceModelKind, Hyperparams, MeasurementModel, PingStats,
                      _active_lags, amplitudes_from_state)
from .errors import DimensionError, NumericalError, ParameterError

@dataclass(frozen=True)
class FilterState:
    mean: np.ndarray
    cov: np.ndarray
    ping_index: int = 0

    def copy(self) -> "FilterState":
        return FilterState(self.mean.copy(), self.cov.copy(), self.ping_index)


@dataclass(frozen=True)
class PingRecord:
    y: np.ndarray
    ping_index: int


@dataclass(frozen=True)
class StepOutput:
    state: FilterState
    innovation: np.ndarray | None
    innovation_cov_chol: np.ndarray | None
    loglik_increment: float
    predicted: FilterState | None = field(default=None, repr=False)


def init(prior_mean, prior_var: float) -> FilterState:
    if not prior_var > 0:
        raise ParameterError("prior_var must be > 0")
    mean = np.array(prior_mean, dtype=float)
    return FilterState(mean, prior_var * np.eye(mean.size), 0)


def wls_init(model: MeasurementModel, first) -> FilterState:
    """Regularized least-squares warm start from the first ping.

    ``first`` is a ping vector or its :class:`PingStats`.
    """
    st = first if isinstance(first, PingStats) else model.stats(first)
    HtH = model.HtH
    eps = 1e-6 * np.trace(HtH) / HtH.shape[0]
    mean = np.linalg.solve(HtH + eps * np.eye(HtH.shape[0]), st.Hz)
    prior_var = 10.0 * (np.max(np.abs(mean)) + 1.0) ** 2
    return init(mean, prior_var)


def _chol(a, what, ping_index=None):
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise NumericalError(f"{what} is not positive definite", ping_index) from None


def _trsolve(L, b, overwrite=False):
    # Fortran-ordered right-hand sides avoid a copy inside LAPACK's wrapper
    return sla.solve_triangular(L, b, lower=True, check_finite=False, overwrite_b=overwrite)


def gram_update(mean, P, st: PingStats, hp: Hyperparams, kind: CovarianceModelKind,
                model: MeasurementModel, ping_index=None):
    """Measurement update from sufficient statistics, given predicted (mean, P).

    ``R = sigma_e^2 I + F F^T`` where the columns of ``F`` are the active
    Doppler directions; ``H^T R^-1 H`` and ``H^T R^-1 nu`` follow from the
    small Gram matrices.  The state part uses ``C = I + Lp^T H^T R^-1 H Lp``
    (``P = Lp Lp^T``), which avoids subtracting nearly equal matrices when the
    prior is wide.  Returns ``(mean_post, cov_post, loglik_increment)``.
    """
    e2 = hp.sigma_e2
    HtH = model.HtH
    n_b = mean.size

    Hnu = st.Hz - HtH @ mean
    nunu = st.zz - 2.0 * (mean @ st.Hz) + mean @ HtH @ mean

    use_d = kind.has_d and hp.sigma_d2 > 0
    use_c = kind.has_c and hp.sigma_c2 > 0

    HF, Fnu, scale = [], [], []
    if use_d:
        HF.append((model.HtJ @ mean)[:, None])
        Fnu.append(np.array([mean @ (st.Jz - model.HtJ.T @ mean)]))
        scale.append(np.array([np.sqrt(hp.sigma_d2)]))
    if use_c:
        a = amplitudes_from_state(model.basis, mean)
        idx = _active_lags(a)
        full = idx.size == a.size      # usual case; skips the gathers below
        aa = a if full else a[idx]
        HtU = model.HtU if full else model.HtU[:, idx]
        UtU_cc = model.UtU if full else model.UtU[np.ix_(idx, idx)]
        HF.append(HtU * aa)
        Fnu.append(aa * ((st.Uz if full else st.Uz[idx]) - HtU.T @ mean))
        scale.append(np.full(idx.size, np.sqrt(hp.sigma_c2)))

    if HF:
        s_f = np.concatenate(scale)
        f = s_f.size
        FF = np.empty((f, f))
        k0 = 0
        if use_d:
            FF[0, 0] = mean @ model.JtJ @ mean
            k0 = 1
        if use_c:
            sc = hp.sigma_c2
            block = FF[k0:, k0:]
            np.multiply(UtU_cc, aa[:, None], out=block)
            block *= sc * aa
            if use_d:
                cross = (a @ (model.UtU if full else model.UtU[:, idx])) * aa
                cross *= np.sqrt(hp.sigma_d2 * sc)
                FF[0, k0:] = cross
                FF[k0:, 0] = cross
        if use_d:
            FF[0, 0] *= hp.sigma_d2
        D = FF
        D[np.diag_indices(f)] += e2
        cD, info = dpotrf(D, lower=1, clean=1)
        if info != 0:
            raise NumericalError("Doppler covariance block is not positive definite", ping_index)
        rhs = np.empty((f, n_b + 1), order="F")
        np.multiply(np.hstack(HF).T, s_f[:, None], out=rhs[:, :n_b])
        rhs[:, n_b] = np.concatenate(Fnu) * s_f
        Tt = _trsolve(cD, rhs, overwrite=True)
        T, tnu = Tt[:, :-1], Tt[:, -1]
        Y = (HtH - T.T @ T) / e2
        Ynu = (Hnu - T.T @ tnu) / e2
        nuRnu = (nunu - tnu @ tnu) / e2
        logdet_R = (model.n_rows - f) * np.log(e2) + 2.0 * np.sum(np.log(np.diag(cD)))
    else:
        Y = HtH / e2
        Ynu = Hnu / e2
        nuRnu = nunu / e2
        logdet_R = model.n_rows * np.log(e2)

    Lp = _chol(P, "predicted state covariance", ping_index)
    C = Lp.T @ Y @ Lp
    C[np.diag_indices(n_b)] += 1.0
    Lc, info = dpotrf(C, lower=1, clean=1)
    if info != 0:
        raise NumericalError("innovation covariance is not positive definite", ping_index)
    Q = _trsolve(Lc, Lp.T)
    v = Q @ Ynu
    quad = nuRnu - v @ v
    logdet = logdet_R + 2.0 * np.sum(np.log(np.diag(Lc)))
    ell = -0.5 * (quad + logdet)
    if not np.isfinite(ell):
        raise NumericalError("non-finite log-likelihood increment", ping_index)

    P_info = Q.T @ Q                # (P^-1 + H^T R^-1 H)^-1
    mean_post = mean + P_info @ Ynu
    # Joseph form with gain K = P_info H^T R^-1: (I - KH) P (I - KH)^T + K R K^T
    A = np.eye(n_b) - P_info @ Y
    cov_post = A @ P @ A.T + P_info @ Y @ P_info
    cov_post = 0.5 * (cov_post + cov_post.T)
    return mean_post, cov_post, float(ell)


def dense_update(mean, P, z, hp: Hyperparams, kind: CovarianceModelKind,
                 model: MeasurementModel, ping_index=None):
    """Measurement update with the explicit N x N innovation covariance.

    Returns ``(mean_post, cov_post, ell, innovation, chol_factor)``.
    """
    H = model.H
    R = model.covariance(kind, hp, mean)
    nu = z - H @ mean
    HP = H @ P
    S = HP @ H.T + R
    S = 0.5 * (S + S.T)
    cS = _chol(S, "innovation covariance", ping_index)
    alpha = sla.cho_solve((cS, True), nu, check_finite=False)
    quad = nu @ alpha
    logdet = 2.0 * np.sum(np.log(np.diag(cS)))
    ell = -0.5 * (quad + logdet)
    if not np.isfinite(ell):
        raise NumericalError("non-finite log-likelihood increment", ping_index)
    K = sla.cho_solve((cS, True), HP, check_finite=False).T
    mean_post = mean + K @ nu
    I_KH = np.eye(P.shape[0]) - K @ H
    cov_post = I_KH @ P @ I_KH.T + K @ R @ K.T
    cov_post = 0.5 * (cov_post + cov_post.T)
    return mean_post, cov_post, float(ell), nu, cS


def predict(state: FilterState, hp: Hyperparams) -> FilterState:
    n = state.mean.size
    return FilterState(state.mean, state.cov + hp.sigma_q2 * np.eye(n), state.ping_index)


def _check(state: FilterState, model: MeasurementModel):
    m = model.n_basis
    if state.mean.shape != (m,) or state.cov.shape != (m, m):
        raise DimensionError("filter state does not match the basis size")


def step(state: FilterState, y: PingRecord, hp: Hyperparams, kind, model: MeasurementModel,
         offset=None, method: str = "gram") -> StepOutput:
    """One time + measurement update.  ``offset`` is subtracted from ``y``."""
    kind = CovarianceModelKind.parse(kind)
    _check(state, model)
    yv = np.asarray(y.y, dtype=float)
    if yv.shape != (model.n_rows,):
        raise DimensionError(f"ping length {yv.shape} != ({model.n_rows},)")
    z = yv if offset is None else yv - np.asarray(offset, dtype=float)
    pred = predict(state, hp)
    if method == "gram":
        mean, cov, ell = gram_update(pred.mean, pred.cov, model.stats(z), hp, kind, model,
                                     y.ping_index)
        nu, chol = z - model.H @ pred.mean, None
    elif method == "dense":
        mean, cov, ell, nu, chol = dense_update(pred.mean, pred.cov, z, hp, kind, model,
                                                y.ping_index)
    else:
        raise ParameterError(f"unknown update method {method!r}")
    return StepOutput(FilterState(mean, cov, y.ping_index), nu, chol, ell, pred)


def run(records, hp: Hyperparams, kind, model: MeasurementModel, init_state=None,
        offsets=None, method: str = "gram"):
    """Fold :func:`step` over ``records``; returns ``(outputs, total_loglik)``."""
    records = list(records)
    if not records:
        raise ParameterError("need at least one ping record")
    if init_state is None:
        init_state = wls_init(model, records[0].y)
    state = init_state
    outputs = []
    total = 0.0
    for i, rec in enumerate(records):
        off = None if offsets is None else offsets[i]
        out = step(state, rec, hp, kind, model, off, method)
        outputs.append(out)
        total += out.loglik_increment
        state = out.state
    return outputs, total


def run_stats(stats_seq, hp: Hyperparams, kind, model: MeasurementModel,
              init_state: FilterState, first_index: int = 1):
    """Filter over precomputed :class:`PingStats`.

    Returns ``(final_state, total_loglik)``; the hot loop for fitting.
    """
    kind = CovarianceModelKind.parse(kind)
    mean, cov = init_state.mean, init_state.cov
    q_eye = hp.sigma_q2 * np.eye(mean.size)
    total = 0.0
    k = first_index
    for k, st in enumerate(stats_seq, start=first_index):
        mean, cov, ell = gram_update(mean, cov + q_eye, st, hp, kind, model, k)
        total += ell
    return FilterState(mean, cov, k), total
