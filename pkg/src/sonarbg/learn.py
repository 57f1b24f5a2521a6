"""Marginal-likelihood hyperparameter fits and nested-model significance tests."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import tracker
from .channel import CovarianceModelKind, Hyperparams, MeasurementModel, PingStats
from .errors import FitError, NumericalError, ParameterError

LOG_VAR_MIN = math.log(1e-30)
LOG_VAR_MAX = math.log(1e30)
SIMPLEX_STEP = math.log(10.0)  # one decade per vertex
RESTART_FACTORS = (1.0, 10.0, 0.1)
NM_OPTIONS = {"xatol": 1e-2, "fatol": 1e-3}
STALL_ITERS_PER_DIM = 10  # stop a search whose best value gained < fatol over this many iterations


@dataclass(frozen=True)
class FitResult:
    kind: CovarianceModelKind
    hp_hat: Hyperparams
    loglik: float
    n_evals: int
    converged: bool
    init_loglik: float = float("-inf")
    fingerprint: str = ""
    final_state: tracker.FilterState | None = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class SignificanceResult:
    kind: CovarianceModelKind
    statistic_2T: float
    dof: int
    p_value: float
    significant: bool | None = None
    hp_hat: Hyperparams | None = None


@dataclass
class SignificanceReport:
    null_fit: FitResult
    fits: dict
    results: dict

    def rows(self) -> list[dict]:
        """Flat records suitable for a CSV writer."""
        out = []
        for kind, res in self.results.items():
            hp = res.hp_hat.as_dict() if res.hp_hat is not None else {}
            out.append({"model": kind.value, "stat_2T": res.statistic_2T, "dof": res.dof,
                        "p_value": res.p_value, "significant": int(bool(res.significant)),
                        **hp})
        return out


def records_fingerprint(records, sigma_e2: float) -> str:
    h = hashlib.sha1()
    h.update(np.float64(sigma_e2).tobytes())
    for rec in records:
        h.update(np.ascontiguousarray(rec.y, dtype=np.float64).tobytes())
    return h.hexdigest()


def _pack(hp: Hyperparams, kind: CovarianceModelKind) -> np.ndarray:
    vals = [getattr(hp, name) for name in kind.param_names]
    return np.log(np.maximum(vals, math.exp(LOG_VAR_MIN)))


def _unpack(x, kind: CovarianceModelKind, sigma_e2: float) -> Hyperparams:
    # the floor maps to an exact zero so boundary points reproduce sub-models
    x = np.asarray(x, dtype=float)
    v = np.where(x <= LOG_VAR_MIN, 0.0, np.exp(np.minimum(x, LOG_VAR_MAX)))
    kw = dict(zip(kind.param_names, v.tolist()))
    return Hyperparams(sigma_e2=sigma_e2, **kw)


def default_init(model: MeasurementModel, records_or_stats, sigma_e2: float) -> Hyperparams:
    """Moment-based starting point.

    Warm-start coefficients of pings 1 and 2 give the process variance from
    their mean squared difference.  Residuals about the ping-1 fit, projected
    on the common-Doppler direction ``g = U B theta`` and averaged over all
    pings, give the Doppler variances: excess energy over ``sigma_e2``
    divided by ``|g|^2``.
    """
    stats = [st if isinstance(st, PingStats) else model.stats(st.y)
             for st in records_or_stats]
    theta = [tracker.wls_init(model, st).mean for st in stats[:2]]
    scale = float(np.mean(theta[0] ** 2)) + 1e-300
    if len(theta) > 1:
        q = 0.5 * float(np.mean((theta[1] - theta[0]) ** 2))
    else:
        q = 1e-3 * scale
    q = max(q, 1e-8 * scale)
    th = theta[0]
    g_H = model.HtJ.T @ th          # g^T H
    gg = th @ model.JtJ @ th
    if gg > 0:
        proj = np.array([(th @ st.Jz - g_H @ th) for st in stats]) / np.sqrt(gg)
        dop = max(float(np.mean(proj**2)) - sigma_e2, 1e-4 * sigma_e2) / gg
    else:
        dop = 1e-8
    return Hyperparams(q, dop, dop, sigma_e2)


class _Objective:
    """Negative log marginal likelihood in log-variance coordinates."""

    def __init__(self, stats, kind, model, sigma_e2, init_state):
        self.stats = stats
        self.kind = kind
        self.model = model
        self.sigma_e2 = sigma_e2
        self.init_state = init_state
        self.n_evals = 0

    def loglik(self, hp: Hyperparams) -> float:
        self.n_evals += 1
        try:
            _, L = tracker.run_stats(self.stats, hp, self.kind, self.model, self.init_state)
        except (NumericalError, np.linalg.LinAlgError, FloatingPointError):
            return -np.inf
        return L if np.isfinite(L) else -np.inf

    def __call__(self, x) -> float:
        return -self.loglik(_unpack(x, self.kind, self.sigma_e2))


def fit(records, kind, model: MeasurementModel, sigma_e2: float, init_hp: Hyperparams | None = None,
        init_state: tracker.FilterState | None = None, extra_starts=(),
        options: dict | None = None) -> FitResult:
    """Maximize the filter's log marginal likelihood over the model's variances.

    Nelder-Mead in log-variance space, restarted from ``init_hp`` scaled by
    1, 10 and 0.1; the best restart wins.  ``extra_starts`` are candidate
    points (such as a nested model's optimum) that are refined only if they
    beat the restarts, which keeps a nesting model at least as good as the
    nested one.
    """
    kind = CovarianceModelKind.parse(kind)
    records = list(records)
    if len(records) < 2:
        raise ParameterError("fit needs at least 2 records")
    if not sigma_e2 > 0:
        raise ParameterError("sigma_e2 must be > 0")
    stats = [model.stats(r.y) for r in records]
    if init_state is None:
        init_state = tracker.wls_init(model, stats[0])
    if init_hp is None:
        init_hp = default_init(model, stats, sigma_e2)
    init_hp = Hyperparams(init_hp.sigma_q2, init_hp.sigma_c2, init_hp.sigma_d2, sigma_e2)

    obj = _Objective(stats, kind, model, sigma_e2, init_state)
    x0 = _pack(init_hp, kind)
    init_ll = obj(x0) * -1.0
    starts = [x0 + math.log(f) for f in RESTART_FACTORS]

    dim = x0.size
    opts = dict(NM_OPTIONS, maxfev=400 * dim)
    if options:
        opts.update(options)

    def _search(xs):
        simplex = np.vstack([xs] + [xs + SIMPLEX_STEP * e for e in np.eye(dim)])
        best = []
        window = STALL_ITERS_PER_DIM * dim

        # A variance heading for zero leaves a flat valley that Nelder-Mead keeps
        # crawling along (tiny gains, so xatol never triggers); stop on stagnation.
        def stalled(intermediate_result):
            best.append(intermediate_result.fun)
            if len(best) > window and best[-window - 1] - best[-1] < opts["fatol"]:
                raise StopIteration

        res = minimize(obj, xs, method="Nelder-Mead", callback=stalled,
                       options=dict(opts, initial_simplex=simplex))
        return np.asarray(res.x), float(res.fun), bool(res.success or res.status == 99)

    best_x, best_f, ok = x0, -init_ll, False
    for xs in starts:
        x, f, success = _search(xs)
        if np.isfinite(f):
            ok = ok or success
            if f < best_f:
                best_x, best_f = x, f
    # extra starts (e.g. nested sub-model optima) are searched from only when
    # they already beat every restart
    for hp in extra_starts:
        xs = _pack(hp, kind)
        if obj(xs) < best_f:
            x, f, success = _search(xs)
            if f < best_f:
                best_x, best_f, ok = x, f, ok or success
    if not np.isfinite(best_f):
        raise FitError(f"all restarts failed for model {kind.value}")

    hp_hat = _unpack(best_x, kind, sigma_e2)
    final_state, L = tracker.run_stats(stats, hp_hat, kind, model, init_state)
    return FitResult(kind, hp_hat, float(L), obj.n_evals + 1, ok, float(init_ll),
                     records_fingerprint(records, sigma_e2), final_state)


def chi2_sf(x: float, dof: int) -> float:
    """Upper tail of the chi-square distribution for 1 or 2 degrees of freedom."""
    if not x >= 0:
        raise ParameterError("chi-square statistic must be >= 0")
    if dof == 2:
        return math.exp(-0.5 * x)
    if dof == 1:
        # Q(1/2, x/2) = erfc(sqrt(x/2))
        return math.erfc(math.sqrt(0.5 * x))
    raise ParameterError(f"unsupported degrees of freedom {dof}")


def llr_statistic(fit_ext: FitResult, fit_null: FitResult, alpha: float | None = None
                  ) -> SignificanceResult:
    if fit_null.kind is not CovarianceModelKind.M0:
        raise ParameterError("null fit must use model m0")
    if fit_ext.fingerprint != fit_null.fingerprint:
        raise ParameterError("fits were computed on different records")
    stat = 2.0 * (fit_ext.loglik - fit_null.loglik)
    dof = fit_ext.kind.extra_params
    if dof == 0:
        p = 1.0
    else:
        p = chi2_sf(max(stat, 0.0), dof)
    sig = None if alpha is None else bool(p <= alpha)
    return SignificanceResult(fit_ext.kind, stat, dof, p, sig, fit_ext.hp_hat)


def significance_test(records, model: MeasurementModel, sigma_e2: float, alpha: float = 0.05,
                      kinds=(CovarianceModelKind.MC, CovarianceModelKind.MD,
                             CovarianceModelKind.MCD),
                      init_hp: Hyperparams | None = None) -> SignificanceReport:
    """Fit M0 and each extension on the same records; Wilks p-values per extension.

    When both Mc and Md are fitted, their optima also seed the Mcd search so
    the nested fit is never worse than either sub-model.
    """
    if not 0 < alpha <= 1:
        raise ParameterError("alpha must be in (0, 1]")
    records = list(records)
    kinds = [CovarianceModelKind.parse(k) for k in kinds]
    order = sorted(set(kinds) - {CovarianceModelKind.M0}, key=lambda k: (k.extra_params, k.value))

    def _fit(kind, extra=()):
        try:
            return fit(records, kind, model, sigma_e2, init_hp, extra_starts=extra)
        except FitError as exc:
            raise FitError(f"[{kind.value}] {exc}") from exc

    null = _fit(CovarianceModelKind.M0)
    fits = {CovarianceModelKind.M0: null}
    results = {}
    for kind in order:
        extra = [Hyperparams(null.hp_hat.sigma_q2, 1e-30, 1e-30, sigma_e2)]
        if kind is CovarianceModelKind.MCD:
            for sub in (CovarianceModelKind.MC, CovarianceModelKind.MD):
                if sub in fits:
                    h = fits[sub].hp_hat
                    extra.append(Hyperparams(h.sigma_q2, max(h.sigma_c2, 1e-30),
                                             max(h.sigma_d2, 1e-30), sigma_e2))
        fits[kind] = _fit(kind, extra)
        results[kind] = llr_statistic(fits[kind], null, alpha)
    return SignificanceReport(null, fits, results)
