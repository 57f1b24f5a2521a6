import dataclasses
import math

import numpy as np
import pytest

from sonarbg import oceansim as oc
from sonarbg.channel import build_model
from sonarbg.errors import ConfigError, ParameterError
from sonarbg.signals import delay, linearized_scale


@pytest.fixture(scope="module")
def sim(chirp, spec):
    s, u = chirp
    m = build_model(s, u, 512, 128, 64, spec.bandwidth_hz)
    return oc.ChannelSimulator(s, 512, m.basis)


def _single(delay_s, amp=1.0, r=0.0):
    a = np.array([amp])
    return oc.ArrivalSet(np.array([delay_s]), a, np.array([r]), a.copy(), np.zeros(1, int),
                         np.zeros(1, int), 0.0)


def test_direct_path_reference():
    arr = oc.image_method_arrivals(oc.ScenarioConfig())
    assert arr.reference_s == pytest.approx(2000.0 / 1500.0)
    assert arr.delays_s[0] == 0.0
    assert np.all(np.diff(arr.delays_s) >= 0)
    assert len(arr) == 6


def test_surface_path_excess_delay():
    arr = oc.image_method_arrivals(oc.ScenarioConfig())
    # image source 2 m above the surface: vertical separation 4 m
    want = (math.sqrt(2000.0**2 + 4.0**2) - 2000.0) / 1500.0
    i = int(np.flatnonzero((arr.surface_bounces == 1) & (arr.bottom_bounces == 0))[0])
    assert arr.delays_s[i] == pytest.approx(want, rel=1e-6)
    assert want == pytest.approx(2.667e-6, rel=1e-3)
    assert arr.amplitudes[i] < 0 < arr.amplitudes[0]


def test_zero_depth_surface_coincides_with_direct():
    arr = oc.image_method_arrivals(oc.ScenarioConfig(node_depth_m=0.0))
    assert arr.delays_s[1] == pytest.approx(arr.delays_s[0], abs=1e-15)


def test_bottom_loss_and_spreading():
    cfg = oc.ScenarioConfig(n_paths=8)
    arr = oc.image_method_arrivals(cfg)
    slant = (arr.delays_s + arr.reference_s) * cfg.sound_speed_mps
    want = (-1.0) ** arr.surface_bounces * 0.7**arr.bottom_bounces / slant
    np.testing.assert_allclose(arr.amplitudes, want, rtol=1e-12)


def test_static_scenario_has_no_perturbation():
    cfg = oc.ScenarioConfig(scenario="static", amp_walk_std=0.1)
    arr = oc.image_method_arrivals(cfg)
    rng = np.random.default_rng(0)
    for k in range(1, 20):
        arr = oc.evolve_ping(arr, cfg, k, rng)
        assert not arr.log_scales.any()
    np.testing.assert_array_equal(arr.amplitudes, arr.nominal_amplitudes)


def test_surface_only_paths_uncorrelated():
    cfg = oc.ScenarioConfig(scenario="surface_only", n_paths=6)
    arr = oc.image_method_arrivals(cfg)
    rng = np.random.default_rng(1)
    r = np.array([oc.evolve_ping(arr, cfg, k, rng).log_scales for k in range(1, 1001)])
    c = np.corrcoef(r.T)
    off = c[~np.eye(6, dtype=bool)]
    assert np.max(np.abs(off)) < 0.1


def test_pure_drift_is_common_mode():
    cfg = oc.ScenarioConfig(scenario="surface_and_drift", surface_rate_std=0.0)
    arr = oc.evolve_ping(oc.image_method_arrivals(cfg), cfg, 1, np.random.default_rng(2))
    assert np.all(arr.log_scales == arr.log_scales[0]) and arr.log_scales[0] != 0


def test_amplitude_walk_keeps_sign():
    cfg = oc.ScenarioConfig(scenario="surface_only", amp_walk_std=2.0)
    arr = oc.image_method_arrivals(cfg)
    rng = np.random.default_rng(3)
    for k in range(1, 50):
        arr = oc.evolve_ping(arr, cfg, k, rng)
        assert np.all(np.sign(arr.amplitudes) == np.sign(arr.nominal_amplitudes))
    with pytest.raises(ParameterError):
        oc.evolve_ping(arr, cfg, 0, rng)


def test_noise_only_ping_variance(sim):
    empty = oc.ArrivalSet(*(np.zeros(0) for _ in range(6)), 0.0)
    rec = sim.render_ping(empty, 1, np.random.default_rng(4), sigma_e2=2.0, kernel="point")
    assert abs(np.var(rec.y) / 2.0 - 1.0) < 0.15


def test_point_arrival_integer_delay_is_exact(sim, chirp):
    s, _ = chirp
    dt = s.dt_s
    x = sim.render_background(_single(9 * dt, 2.5), kernel="point")
    np.testing.assert_allclose(x, 2.5 * delay(s.samples, 9, 512), atol=1e-12)


def test_point_arrival_small_scale_matches_linearization(sim, chirp, spec):
    s, u = chirp
    r = 1e-3
    x = sim.render_background(_single(0.0, 1.0, r), kernel="point")
    lin = linearized_scale(s, u, r, 0, 512)
    t = np.arange(512) * spec.dt_s
    exact = spec.evaluate(math.exp(r) * t)
    bound = 2.0 * np.max(np.abs(exact - lin))  # second-order remainder plus resampler error
    assert np.max(np.abs(x - lin)) <= max(bound, 0.02)


def test_arrival_outside_window(sim):
    with pytest.raises(ConfigError):
        sim.render_background(_single(1.0))
    with pytest.raises(ConfigError):
        oc.ChannelSimulator(sim.s, 512, None).render_background(_single(0.0), "diffuse")


def test_scale_to_inr_snr():
    n = 512
    x = np.ones(n)
    assert oc.scale_to_inr_snr(x, None, 1.0, 0.0, None) == (1.0, 0.0)
    g, _ = oc.scale_to_inr_snr(x, None, 1.0, 30.0, None)
    assert g == pytest.approx(math.sqrt(1000.0))
    rng = np.random.default_rng(5)
    y = rng.standard_normal(n)
    gb, go = oc.scale_to_inr_snr(y, 3 * y, 0.5, 17.0, -3.0)
    assert oc.measured_ratio_db(gb * y, 0.5) == pytest.approx(17.0, abs=1e-9)
    assert oc.measured_ratio_db(go * 3 * y, 0.5) == pytest.approx(-3.0, abs=1e-9)
    assert oc.scale_to_inr_snr(y, y, 1.0, -math.inf, None) == (0.0, 0.0)
    with pytest.raises(ParameterError):
        oc.scale_to_inr_snr(np.zeros(n), None, 1.0, 10.0, None)


def test_stationary_track(sim):
    cfg = oc.ScenarioConfig()
    tr = oc.make_target_track("stationary", cfg, sim)
    assert np.all(tr.delays_s == cfg.target_delay_s) and np.all(tr.betas == 1.0)
    assert not tr.waveform(40).any() and tr.waveform(41).any()


def test_crossing_track_minimum_at_baseline(sim):
    cfg = oc.ScenarioConfig(crossing_ping=70)
    tau, beta = oc.target_delays("crossing", cfg)
    assert np.argmin(tau) == 69 and tau[69] == pytest.approx(0.0, abs=1e-15)
    assert np.all(np.diff(tau[:69]) < 0) and np.all(np.diff(tau[69:]) > 0)
    # closing target compresses the echo (beta > 1), opening target stretches it
    assert beta[50] > 1.0 > beta[90]
    tr = oc.make_target_track("crossing", cfg, sim)
    assert tr.templates.shape == (100, 512)
    with pytest.raises(ParameterError):
        oc.target_delays("zigzag", cfg)


def test_simulation_is_deterministic(sim):
    cfg = oc.ScenarioConfig(n_pings=6, onset=4)
    a = oc.simulate_run(cfg, sim, 3)
    b = oc.simulate_run(cfg, sim, 3)
    c = oc.simulate_run(cfg, sim, 4)
    np.testing.assert_array_equal(a.pings(10.0), b.pings(10.0))
    assert not np.array_equal(a.pings(), c.pings())


def test_measured_inr(sim):
    cfg = oc.ScenarioConfig(n_pings=20, inr_db=30.0, onset=20)
    run = oc.simulate_run(cfg, sim, 0)
    inr = [oc.measured_ratio_db(b, 1.0) for b in run.background]
    assert abs(np.mean(inr) - 30.0) < 0.5


def test_static_ping_differences_are_noise(sim):
    cfg = oc.ScenarioConfig(scenario="static", n_pings=10, onset=10)
    y = oc.simulate_run(cfg, sim, 1).pings()
    diff = np.sum(np.diff(y, axis=0) ** 2, axis=1)
    assert np.all(diff <= 2 * 512 * 1.0 * 1.25)


def test_target_scaled_to_snr(sim):
    cfg = oc.ScenarioConfig(n_pings=45)
    run = oc.simulate_run(cfg, sim, 0)
    x = run.pings(10.0) - run.pings(None)
    assert not x[:40].any()
    assert oc.measured_ratio_db(x[40], 1.0) == pytest.approx(10.0, abs=1e-9)


def test_ping_file_round_trip(tmp_path, sim):
    y = oc.simulate_run(oc.ScenarioConfig(n_pings=3, onset=2), sim, 0).pings()
    p = oc.write_ping_file(tmp_path / "p.csv", y, 1 / 15000)
    back, dt = oc.read_ping_file(p)
    np.testing.assert_array_equal(back, y)
    assert dt == 1 / 15000
    (tmp_path / "bad.csv").write_text("x,y\n")
    with pytest.raises(ConfigError):
        oc.read_ping_file(tmp_path / "bad.csv")


def test_scenario_config_validation():
    assert oc.ScenarioConfig(scenario="3").scenario == "surface_and_drift"
    for bad in (dict(depth_m=0), dict(node_depth_m=60), dict(surface_rate_std=-1),
                dict(arrival_kernel="blob"), dict(onset=0), dict(scenario="rough")):
        with pytest.raises(ParameterError):
            oc.ScenarioConfig(**bad)
    cfg = dataclasses.replace(oc.ScenarioConfig(), scenario="static")
    assert cfg.effective_drift_std == 0 and cfg.effective_surface_std == 0
