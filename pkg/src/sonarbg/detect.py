"""Sequential likelihood-ratio test with restart for target onset detection.

Two filters run side by side.  The H0 filter tracks the background alone and
is never reset.  The H1 filter tracks the background after subtracting the
known target waveform, under the hypothesis that the target appeared at the
current restart ping ``k_start``; it is re-cloned from the H0 posterior on
every restart.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import tracker
from .channel import CovarianceModelKind, Hyperparams, MeasurementModel
from .errors import ParameterError


class Decision(str, enum.Enum):
    MONITOR = "monitor"
    RESTART = "restart"
    DETECT = "detect"


@dataclass(frozen=True)
class SlrtConfig:
    h0: float = 0.0
    h1: float = float("inf")
    restart_on_lower: bool = True

    def __post_init__(self):
        if not (self.h0 <= 0.0 <= self.h1):
            raise ParameterError(f"need h0 <= 0 <= h1, got h0={self.h0}, h1={self.h1}")


@dataclass(frozen=True)
class SlrtState:
    g: float
    k_start: int
    h0_filter: tracker.FilterState
    h1_filter: tracker.FilterState


@dataclass(frozen=True, eq=False)
class TargetTrack:
    """Known target parameters per ping (1-based ping index ``k``).

    ``templates[k-1]`` is the target echo the ping would contain if the target
    were present; the rendered echo is zero before ``onset``.
    """

    onset: int
    amplitudes: np.ndarray
    delays_s: np.ndarray
    betas: np.ndarray
    templates: np.ndarray

    @property
    def n_pings(self) -> int:
        return self.templates.shape[0]

    def template(self, k: int) -> np.ndarray:
        return self.templates[k - 1]

    def waveform(self, k: int) -> np.ndarray:
        if k < self.onset:
            return np.zeros(self.templates.shape[1])
        return self.templates[k - 1]

    def scaled(self, gain: float) -> "TargetTrack":
        return replace(self, amplitudes=self.amplitudes * gain, templates=self.templates * gain)


@dataclass(frozen=True)
class DetectionOutcome:
    detected: bool
    alarm_ping: int | None
    delay: int | None
    onset: int
    max_g: float
    g_trace: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def false_alarm(self) -> bool:
        return self.detected and self.alarm_ping < self.onset


def advance(g: float, gamma: float, cfg: SlrtConfig) -> tuple[float, Decision]:
    """Scalar part of the recursion: returns (G after update, decision)."""
    g = g + gamma
    if g >= cfg.h1 and g > cfg.h0:
        return g, Decision.DETECT
    if cfg.restart_on_lower and g <= cfg.h0:
        return g, Decision.RESTART
    return g, Decision.MONITOR


def start(init_state: tracker.FilterState, start_ping: int) -> SlrtState:
    if start_ping < 1:
        raise ParameterError("start_ping must be >= 1")
    return SlrtState(0.0, start_ping, init_state, init_state)


def slrt_step(state: SlrtState, record: tracker.PingRecord, hp: Hyperparams, kind,
              model: MeasurementModel, track: TargetTrack, cfg: SlrtConfig):
    """Advance both filters by one ping; returns ``(new_state, decision, gamma, g)``.

    ``g`` is the statistic after the update and before any restart reset.
    """
    kind = CovarianceModelKind.parse(kind)
    k = record.ping_index
    out0 = tracker.step(state.h0_filter, record, hp, kind, model)
    out1 = tracker.step(state.h1_filter, record, hp, kind, model, offset=track.template(k))
    gamma = out1.loglik_increment - out0.loglik_increment
    g, decision = advance(state.g, gamma, cfg)
    if decision is Decision.RESTART:
        new = SlrtState(0.0, k + 1, out0.state, out0.state)
    else:
        new = SlrtState(g, state.k_start, out0.state, out1.state)
    return new, decision, gamma, g


def slrt_run(records, hp: Hyperparams, kind, model: MeasurementModel, track: TargetTrack,
             cfg: SlrtConfig, start_ping: int, init_state: tracker.FilterState,
             stop_on_detect: bool = True) -> DetectionOutcome:
    """Run the test over ``records`` (pings ``start_ping`` onwards).

    With ``stop_on_detect=False`` the whole horizon is processed and the full
    statistic trace is kept, so alarms for any other ``h1`` can be derived
    afterwards with :func:`outcome_from_trace`.
    """
    kind = CovarianceModelKind.parse(kind)
    if start_ping < 1:
        raise ParameterError("start_ping must be >= 1")
    # same recursion as slrt_step, kept on raw arrays for speed
    m0, P0 = init_state.mean, init_state.cov
    m1, P1 = m0, P0
    q_eye = hp.sigma_q2 * np.eye(m0.size)
    g = 0.0
    trace = []
    alarm = None
    for rec in records:
        k = rec.ping_index
        y = np.asarray(rec.y, dtype=float)
        m0, P0, l0 = tracker.gram_update(m0, P0 + q_eye, model.stats(y), hp, kind, model, k)
        m1, P1, l1 = tracker.gram_update(m1, P1 + q_eye, model.stats(y - track.template(k)),
                                         hp, kind, model, k)
        g, decision = advance(g, l1 - l0, cfg)
        trace.append(g)
        if decision is Decision.DETECT and alarm is None:
            alarm = k
            if stop_on_detect:
                break
        elif decision is Decision.RESTART:
            g = 0.0
            m1, P1 = m0, P0
    trace = np.asarray(trace)
    max_g = float(trace.max()) if trace.size else 0.0
    if alarm is None:
        return DetectionOutcome(False, None, None, track.onset, max_g, trace)
    return DetectionOutcome(True, alarm, alarm - track.onset, track.onset, max_g, trace)


def outcome_from_trace(trace, first_ping: int, onset: int, cfg: SlrtConfig) -> DetectionOutcome:
    """Outcome of a threshold ``cfg.h1`` applied to a recorded statistic trace.

    Valid because the statistic path before the first alarm does not depend
    on ``h1``.
    """
    trace = np.asarray(trace, dtype=float)
    hits = np.flatnonzero((trace >= cfg.h1) & (trace > cfg.h0))
    max_g = float(trace.max()) if trace.size else 0.0
    if hits.size == 0:
        return DetectionOutcome(False, None, None, onset, max_g, trace)
    alarm = first_ping + int(hits[0])
    return DetectionOutcome(True, alarm, alarm - onset, onset, max_g, trace)


def threshold_from_maxima(maxima, pfa_target: float) -> float:
    """Smallest recorded maximum whose exceedance fraction is at most ``pfa_target``."""
    maxima = np.asarray(maxima, dtype=float)
    if maxima.size == 0:
        raise ParameterError("no maxima to calibrate from")
    if not 0 < pfa_target <= 1:
        raise ParameterError("pfa_target must be in (0, 1]")
    if np.all(maxima == maxima[0]):
        warnings.warn("all calibration maxima are equal; threshold is degenerate", stacklevel=2)
    return float(np.quantile(maxima, 1.0 - pfa_target, method="higher"))


def calibrate_h1(h0_records_generator, n_trials: int, pfa_target: float, hp: Hyperparams | None,
                 kind, model: MeasurementModel, h0: float = 0.0) -> float:
    """Empirical threshold from background-only runs.

    ``h0_records_generator(i)`` returns ``(records, init_state, track, hp_i)``
    for trial ``i``; ``hp_i`` may be ``None`` to use ``hp``.  The records cover
    the test horizon and ``track`` supplies the hypothesized target waveform.
    """
    if n_trials * pfa_target < 1 - 1e-12:
        raise ParameterError("need n_trials >= 1 / pfa_target")
    cfg = SlrtConfig(h0=h0)
    maxima = []
    for i in range(n_trials):
        records, init_state, track, hp_i = h0_records_generator(i)
        records = list(records)
        out = slrt_run(records, hp_i if hp_i is not None else hp, kind, model, track, cfg,
                       records[0].ping_index, init_state, stop_on_detect=False)
        maxima.append(out.max_g)
    return max(threshold_from_maxima(maxima, pfa_target), h0)
