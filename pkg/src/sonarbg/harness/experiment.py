"""Monte Carlo orchestration: realizations, calibration, detection metrics.

A *realization* is one simulated ping sequence.  Its background and noise are
shared by every model and SNR; the target is added on demand.  For each model
the hyperparameters are fitted on the training pings, the filter is carried
forward to the onset ping, and the SLRT statistic is recorded over the whole
test horizon with an infinite upper threshold.  Because the statistic path
before the first alarm does not depend on ``h1``, any calibrated threshold
can then be applied to the stored traces.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .. import detect, learn, tracker
from ..channel import CovarianceModelKind, MeasurementModel, build_model
from ..errors import FitError, NumericalError
from ..oceansim import ChannelSimulator, Scenario, SimulatedRun, simulate_run
from ..signals import companion_waveform, generate_lfm
from .config import ExperimentConfig
from .metrics import CellMetrics, MetricsSummary, cdf_points, summarize_cell

log = logging.getLogger(__name__)

CALIBRATION_OFFSET = 1_000_000
SIGNIFICANCE_OFFSET = 2_000_000
M0 = CovarianceModelKind.M0


@dataclass(frozen=True, eq=False)
class Workspace:
    model: MeasurementModel
    sim: ChannelSimulator


@lru_cache(maxsize=4)
def _workspace(waveform, dims) -> Workspace:
    s, u = generate_lfm(waveform), companion_waveform(waveform)
    model = build_model(s, u, dims.n_rows, dims.n_lags, dims.n_basis, waveform.bandwidth_hz,
                        dims.placement)
    # warm the Gram caches once per process
    for name in ("HtH", "HtJ", "JtJ", "HtU", "JtU", "UtU"):
        getattr(model, name)
    return Workspace(model, ChannelSimulator(s, dims.n_rows, model.basis))


def workspace(cfg: ExperimentConfig) -> Workspace:
    return _workspace(cfg.waveform, cfg.dims)


@dataclass(eq=False)
class Realization:
    trial_id: int
    role: str
    fits: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)   # (model, snr_db, target_present) -> G trace
    failures: dict = field(default_factory=dict)

    def trace(self, model: str, snr_db: float, target: bool):
        return self.traces.get((model, float(snr_db), bool(target)))


def _seed_trial(role: str, trial_id: int) -> int:
    return trial_id + (CALIBRATION_OFFSET if role == "calibrate" else 0)


def simulate(cfg: ExperimentConfig, trial_id: int, role: str = "detect", **scenario_overrides
             ) -> SimulatedRun:
    ws = workspace(cfg)
    scen = cfg.scenario_for(**scenario_overrides)
    return simulate_run(scen, ws.sim, _seed_trial(role, trial_id))


def fit_and_carry(cfg: ExperimentConfig, run: SimulatedRun, kind) -> learn.FitResult:
    """Fit on the training pings, then filter background-only up to the onset."""
    ws = workspace(cfg)
    kind = CovarianceModelKind.parse(kind)
    train = run.records(None, first=1, last=cfg.train_pings)
    res = learn.fit(train, kind, ws.model, cfg.scenario.sigma_e2)
    state = res.final_state
    if cfg.onset - 1 > cfg.train_pings:
        gap = run.records(None, first=cfg.train_pings + 1, last=cfg.onset - 1)
        stats = [ws.model.stats(r.y) for r in gap]
        state, _ = tracker.run_stats(stats, res.hp_hat, kind, ws.model, state,
                                     first_index=cfg.train_pings + 1)
    return learn.FitResult(res.kind, res.hp_hat, res.loglik, res.n_evals, res.converged,
                           res.init_loglik, res.fingerprint, state)


def statistic_trace(cfg: ExperimentConfig, run: SimulatedRun, fit: learn.FitResult, snr_db: float,
                    target: bool) -> np.ndarray:
    ws = workspace(cfg)
    records = run.records(snr_db if target else None, target=target, first=cfg.onset)
    track = run.track(snr_db)
    out = detect.slrt_run(records, fit.hp_hat, fit.kind, ws.model, track,
                          detect.SlrtConfig(h0=cfg.h0), cfg.onset, fit.final_state,
                          stop_on_detect=False)
    return out.g_trace


def reference_snr(cfg: ExperimentConfig) -> float:
    grid = np.asarray(cfg.snr_grid_db)
    return float(grid[np.argmin(np.abs(grid - cfg.reference_snr_db))])


def run_realization(cfg: ExperimentConfig, trial_id: int, role: str) -> Realization:
    """Fit every model and record statistic traces for one realization.

    ``detect`` realizations record target-present traces at every SNR plus a
    target-absent trace at the reference SNR (fresh null trials);
    ``calibrate`` realizations record target-absent traces at every SNR.
    """
    run = simulate(cfg, trial_id, role)
    out = Realization(trial_id, role)
    kinds = list(dict.fromkeys([M0] + cfg.kinds)) if role == "detect" else cfg.kinds
    ref = reference_snr(cfg)
    for kind in kinds:
        name = kind.value
        try:
            fit = fit_and_carry(cfg, run, kind)
            out.fits[name] = fit
            if kind not in cfg.kinds:
                continue
            for snr in cfg.snr_grid_db:
                if role == "detect":
                    out.traces[(name, snr, True)] = statistic_trace(cfg, run, fit, snr, True)
                if role == "calibrate" or snr == ref:
                    out.traces[(name, snr, False)] = statistic_trace(cfg, run, fit, snr, False)
        except (FitError, NumericalError) as exc:
            log.warning("trial %d (%s) model %s failed: %s", trial_id, role, name, exc)
            out.failures[name] = str(exc)
    # fits carry filter states that callers do not need; keep the small parts
    out.fits = {k: _strip(v) for k, v in out.fits.items()}
    return out


def _strip(fit: learn.FitResult) -> learn.FitResult:
    return learn.FitResult(fit.kind, fit.hp_hat, fit.loglik, fit.n_evals, fit.converged,
                           fit.init_loglik, fit.fingerprint, None)


@dataclass(frozen=True)
class TrialOutcome:
    trial_id: int
    model: str
    snr_db: float
    outcome: detect.DetectionOutcome | None
    significance: learn.SignificanceResult | None = None
    error: str | None = None


def run_trial(cfg: ExperimentConfig, model, snr_db: float, trial_id: int,
              h1: float = math.inf, with_significance: bool = False) -> TrialOutcome:
    """Simulate, fit on the training pings, carry the filter and run the SLRT."""
    kind = CovarianceModelKind.parse(model)
    run = simulate(cfg, trial_id)
    try:
        fit = fit_and_carry(cfg, run, kind)
        sig = None
        if with_significance and kind is not M0:
            null = fit_and_carry(cfg, run, M0)
            sig = learn.llr_statistic(fit, null, cfg.alpha)
        ws = workspace(cfg)
        records = run.records(snr_db, first=cfg.onset)
        track = run.track(snr_db)
        out = detect.slrt_run(records, fit.hp_hat, kind, ws.model, track,
                              detect.SlrtConfig(h0=cfg.h0, h1=h1), cfg.onset, fit.final_state)
        return TrialOutcome(trial_id, kind.value, snr_db, out, sig)
    except (FitError, NumericalError) as exc:
        return TrialOutcome(trial_id, kind.value, snr_db, None, None, str(exc))


def _realization_job(args):
    cfg, trial_id, role = args
    return run_realization(cfg, trial_id, role)


def map_realizations(cfg: ExperimentConfig, jobs, progress=None) -> list[Realization]:
    jobs = [(cfg, t, r) for t, r in jobs]
    out = []
    if cfg.workers <= 1:
        it = map(_realization_job, jobs)
        for i, res in enumerate(it):
            out.append(res)
            if progress:
                progress(i + 1, len(jobs))
        return out
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        for i, res in enumerate(pool.map(_realization_job, jobs, chunksize=1)):
            out.append(res)
            if progress:
                progress(i + 1, len(jobs))
    return out


def calibrate_thresholds(cfg: ExperimentConfig, calib: list[Realization]) -> dict:
    """h1 per (model, snr) from the maxima of target-absent traces."""
    h1 = {}
    for model in cfg.models:
        for snr in cfg.snr_grid_db:
            maxima = [float(np.max(t)) for r in calib
                      if (t := r.trace(model, snr, False)) is not None and t.size]
            if not maxima:
                h1[(model, snr)] = math.inf
                continue
            h1[(model, snr)] = max(detect.threshold_from_maxima(maxima, cfg.pfa), cfg.h0)
    return h1


@dataclass
class SweepResult:
    summary: MetricsSummary
    thresholds: dict
    trials: list
    significance: list


def run_sweep(cfg: ExperimentConfig, out_dir=None, progress=None, plots: bool = True
              ) -> SweepResult:
    """Calibrate, run ``n_mc`` trials per (model, SNR) and aggregate metrics."""
    jobs = [(i, "calibrate") for i in range(cfg.calibration_trials)]
    jobs += [(i, "detect") for i in range(cfg.n_mc)]
    reals = map_realizations(cfg, jobs, progress)
    calib = [r for r in reals if r.role == "calibrate"]
    dets = [r for r in reals if r.role == "detect"]
    h1 = calibrate_thresholds(cfg, calib)
    horizon = cfg.scenario.n_pings - cfg.onset + 1
    ref = reference_snr(cfg)

    cells, trials, cdf, fa = [], [], [], []
    for model in cfg.models:
        for snr in cfg.snr_grid_db:
            scfg = detect.SlrtConfig(h0=cfg.h0, h1=h1[(model, snr)])
            outcomes, failed = [], 0
            for r in dets:
                tr = r.trace(model, snr, True)
                if tr is None:
                    failed += 1
                    trials.append(_trial_row(r.trial_id, model, snr, None, r.failures.get(model)))
                    continue
                o = detect.outcome_from_trace(tr, cfg.onset, cfg.onset, scfg)
                outcomes.append(o)
                trials.append(_trial_row(r.trial_id, model, snr, o, None))
            cells.append(summarize_cell(model, snr, scfg.h1, outcomes, failed))
            cdf.extend(cdf_points(model, snr, outcomes, horizon))
            if snr == ref:
                nulls = [detect.outcome_from_trace(t, cfg.onset, math.inf, scfg)
                         for r in dets if (t := r.trace(model, snr, False)) is not None]
                n_alarm = sum(o.detected for o in nulls)
                fa.append((model, snr, scfg.h1, len(nulls), n_alarm,
                           n_alarm / len(nulls) if nulls else math.nan))
    summary = MetricsSummary(cells, cdf, fa)

    sig_rows = []
    for r in dets:
        null = r.fits.get(M0.value)
        for model in cfg.models:
            fit = r.fits.get(model)
            if null is None or fit is None or model == M0.value:
                continue
            res = learn.llr_statistic(fit, null, cfg.alpha)
            sig_rows.append({"trial": r.trial_id, "model": model, "stat_2T": res.statistic_2T,
                             "dof": res.dof, "p_value": res.p_value,
                             "significant": int(bool(res.significant)),
                             **{k: v for k, v in fit.hp_hat.as_dict().items()}})

    if out_dir is not None:
        from .outputs import write_sweep_outputs
        write_sweep_outputs(out_dir, cfg, summary, trials, sig_rows, plots=plots)
    return SweepResult(summary, h1, trials, sig_rows)


def _trial_row(trial_id, model, snr, o, error):
    if o is None:
        return {"trial": trial_id, "model": model, "snr_db": snr, "status": "failed",
                "detected": 0, "alarm_ping": "", "delay_pings": "", "max_g": "",
                "error": error or ""}
    return {"trial": trial_id, "model": model, "snr_db": snr, "status": "ok",
            "detected": int(o.detected), "alarm_ping": "" if o.alarm_ping is None else o.alarm_ping,
            "delay_pings": "" if o.delay is None else o.delay, "max_g": o.max_g, "error": ""}


# ---------------------------------------------------------------------------
# significance sweep
# ---------------------------------------------------------------------------

ALL_SCENARIOS = (Scenario.STATIC.value, Scenario.SURFACE_ONLY.value,
                 Scenario.SURFACE_AND_DRIFT.value)


def _significance_job(args):
    cfg, scenario, inr, trial, kinds = args
    ws = workspace(cfg)
    scen = cfg.scenario_for(scenario=scenario, inr_db=inr)
    run = simulate_run(scen, ws.sim, trial)
    train = run.records(None, first=1, last=cfg.train_pings)
    try:
        rep = learn.significance_test(train, ws.model, scen.sigma_e2, cfg.alpha, kinds)
    except (FitError, NumericalError) as exc:
        return [{"scenario": scenario, "inr_db": inr, "trial": trial, "model": k,
                 "stat_2T": math.nan, "dof": CovarianceModelKind.parse(k).extra_params,
                 "p_value": math.nan, "significant": 0, "error": str(exc)} for k in kinds]
    rows = []
    for row in rep.rows():
        rows.append({"scenario": scenario, "inr_db": inr, "trial": trial, **row, "error": ""})
    return rows


def run_significance_sweep(cfg: ExperimentConfig, inr_grid_db=None, scenarios=ALL_SCENARIOS,
                           replicates: int | None = None,
                           kinds=("mc", "md", "mcd"), out_dir=None) -> list[dict]:
    """Wilks p-values of each extension over (scenario, INR, replicate).

    Replicates use the same channel seeds across scenarios and INR levels, so
    the comparison between cells is paired.
    """
    inr_grid_db = cfg.significance_inr_grid_db if inr_grid_db is None else inr_grid_db
    replicates = cfg.significance_replicates if replicates is None else replicates
    kinds = tuple(CovarianceModelKind.parse(k).value for k in kinds)
    jobs = [(cfg, sc, float(inr), SIGNIFICANCE_OFFSET + rep, kinds)
            for sc in scenarios for inr in inr_grid_db for rep in range(replicates)]
    if cfg.workers <= 1:
        chunks = list(map(_significance_job, jobs))
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_significance_job, jobs, chunksize=1))
    rows = [row for chunk in chunks for row in chunk]
    split = significance_split(rows, cfg.alpha)
    if split.get("static_mcd_rejected") is not None and split.get("drift_md_strong") is not None:
        if not (split["static_mcd_rejected"] >= 0.5 and split["drift_md_strong"] >= 0.5):
            log.warning("static/drift significance split not observed: %s", split)
    if out_dir is not None:
        from .outputs import write_rows
        write_rows(out_dir, "significance_sweep.csv", rows)
    return rows


def significance_split(rows, alpha: float = 0.05) -> dict:
    """Fraction of static-scenario Mcd fits rejected and drift-scenario Md fits with p < 1e-3."""

    def frac(sel, pred):
        vals = [pred(r) for r in rows if sel(r) and not math.isnan(r["p_value"])]
        return sum(vals) / len(vals) if vals else None

    return {
        "static_mcd_rejected": frac(lambda r: r["scenario"] == "static" and r["model"] == "mcd",
                                    lambda r: r["p_value"] > alpha),
        "drift_md_strong": frac(lambda r: r["scenario"] == "surface_and_drift"
                                and r["model"] == "md", lambda r: r["p_value"] < 1e-3),
    }


__all__ = [
    "CellMetrics", "Realization", "SweepResult", "TrialOutcome", "calibrate_thresholds",
    "fit_and_carry", "map_realizations", "reference_snr", "run_realization",
    "run_significance_sweep", "run_sweep", "run_trial", "significance_split", "simulate",
    "statistic_trace", "workspace",
]
