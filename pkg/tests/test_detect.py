import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sonarbg import detect, tracker
from sonarbg.channel import Hyperparams
from sonarbg.detect import Decision, SlrtConfig, TargetTrack
from sonarbg.errors import ParameterError
from sonarbg.tracker import PingRecord


def _track(model, onset, n_pings, amp, rng):
    t = np.zeros(model.n_rows)
    t[30:50] = np.hanning(20)
    templates = np.tile(amp * t, (n_pings, 1))
    return TargetTrack(onset, np.full(n_pings, amp), np.zeros(n_pings), np.ones(n_pings),
                       templates)


def _records(model, track, n_pings, rng, with_target):
    theta = rng.standard_normal(model.n_basis)
    out = []
    for k in range(1, n_pings + 1):
        y = model.H @ theta + rng.standard_normal(model.n_rows)
        if with_target:
            y = y + track.waveform(k)
        out.append(PingRecord(y, k))
    return out


def test_advance_decisions():
    cfg = SlrtConfig(h0=0.0, h1=5.0)
    assert advance_pair(0.0, 6.0, cfg) == (6.0, Decision.DETECT)
    assert advance_pair(1.0, -2.0, cfg) == (-1.0, Decision.RESTART)
    assert advance_pair(1.0, 1.0, cfg) == (2.0, Decision.MONITOR)
    # G exactly at h0 restarts
    assert advance_pair(1.0, -1.0, cfg)[1] is Decision.RESTART
    no_restart = SlrtConfig(h0=-10.0, h1=5.0, restart_on_lower=False)
    assert advance_pair(0.0, -20.0, no_restart)[1] is Decision.MONITOR


def advance_pair(g, gamma, cfg):
    return detect.advance(g, gamma, cfg)


def test_config_validation():
    with pytest.raises(ParameterError):
        SlrtConfig(h0=1.0)
    with pytest.raises(ParameterError):
        SlrtConfig(h1=-1.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=60), st.floats(0.5, 80))
def test_trace_outcome_matches_direct_run(gammas, h1):
    # rerunning the scalar recursion with a finite h1 equals thresholding the h1 = inf trace
    inf_cfg, cfg = SlrtConfig(), SlrtConfig(h1=h1)
    g, trace = 0.0, []
    for x in gammas:
        g, d = detect.advance(g, x, inf_cfg)
        trace.append(g)
        if d is Decision.RESTART:
            g = 0.0
    g, alarm = 0.0, None
    for k, x in enumerate(gammas):
        g, d = detect.advance(g, x, cfg)
        if d is Decision.DETECT:
            alarm = k
            break
        if d is Decision.RESTART:
            g = 0.0
    out = detect.outcome_from_trace(trace, 0, 0, cfg)
    assert out.alarm_ping == alarm


def test_step_and_run_agree(small_model, rng):
    n = 12
    track = _track(small_model, 5, n, 3.0, rng)
    recs = _records(small_model, track, n, rng, True)
    hp = Hyperparams(0.01)
    init = tracker.init(np.zeros(small_model.n_basis), 5.0)
    cfg = SlrtConfig(h1=math.inf)
    out = detect.slrt_run(recs, hp, "m0", small_model, track, cfg, 1, init, stop_on_detect=False)
    state = detect.start(init, 1)
    gs = []
    for rec in recs:
        state, dec, gamma, g = detect.slrt_step(state, rec, hp, "m0", small_model, track, cfg)
        gs.append(g)
    np.testing.assert_allclose(out.g_trace, gs, rtol=1e-9, atol=1e-7)


def test_strong_target_detected_at_onset(small_model, rng):
    n = 15
    track = _track(small_model, 8, n, 6.0, rng)
    recs = _records(small_model, track, n, rng, True)
    init = tracker.init(np.zeros(small_model.n_basis), 5.0)
    out = detect.slrt_run(recs[7:], Hyperparams(0.01), "m0", small_model, track,
                          SlrtConfig(h1=20.0), 8, init)
    assert out.detected and out.delay == 0 and not out.false_alarm


def test_hypothesized_target_absent_keeps_statistic_low(small_model, rng):
    n = 15
    track = _track(small_model, 1, n, 6.0, rng)
    recs = _records(small_model, track, n, rng, False)
    init = tracker.init(np.zeros(small_model.n_basis), 5.0)
    out = detect.slrt_run(recs, Hyperparams(0.01), "m0", small_model, track, SlrtConfig(), 1,
                          init, stop_on_detect=False)
    assert out.max_g <= 0.0
    assert len(out.g_trace) == n


def test_threshold_from_maxima():
    maxima = np.arange(1, 101, dtype=float)
    h = detect.threshold_from_maxima(maxima, 0.05)
    assert h == 96.0
    assert np.mean(maxima >= h) <= 0.05 + 1e-12
    with pytest.warns(UserWarning):
        detect.threshold_from_maxima([3.0] * 20, 0.05)
    with pytest.raises(ParameterError):
        detect.threshold_from_maxima([], 0.05)


def test_calibrate_h1_controls_false_alarms(small_model):
    n = 10
    rng = np.random.default_rng(0)
    track = _track(small_model, 1, n, 0.5, rng)
    init = tracker.init(np.zeros(small_model.n_basis), 5.0)

    def gen(i):
        r = np.random.default_rng(100 + i)
        return _records(small_model, track, n, r, False), init, track, None

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        h1 = detect.calibrate_h1(gen, 40, 0.05, Hyperparams(0.01), "m0", small_model)
    assert h1 >= 0.0
    with pytest.raises(ParameterError):
        detect.calibrate_h1(gen, 10, 0.05, Hyperparams(0.01), "m0", small_model)


def test_track_waveform_zero_before_onset(small_model, rng):
    track = _track(small_model, 4, 6, 1.0, rng)
    assert not track.waveform(3).any()
    assert track.waveform(4).any()
    s = track.scaled(2.0)
    np.testing.assert_array_equal(s.template(5), 2 * track.template(5))
