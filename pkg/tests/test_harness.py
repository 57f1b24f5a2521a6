import dataclasses
import math

import numpy as np
import pytest

from sonarbg import cli
from sonarbg.detect import DetectionOutcome
from sonarbg.errors import ConfigError
from sonarbg.harness import ExperimentConfig, config_from_dict, dump_config, load_config
from sonarbg.harness import experiment as ex
from sonarbg.harness.config import DimsConfig
from sonarbg.harness.metrics import MetricsSummary, cdf_points, summarize_cell
from sonarbg.oceansim import ScenarioConfig

# a tiny but complete pipeline: N = 192 keeps the background and target inside the window
TINY = dict(
    dims=dict(n_rows=192, n_lags=64, n_basis=32),
    scenario=dict(n_pings=14, onset=9),
    models=["m0", "md"],
    snr_grid_db=[10.0, 20.0],
    n_mc=3,
    n_calibration=20,
    train_pings=6,
    onset=9,
)


@pytest.fixture(scope="module")
def tiny_cfg():
    return config_from_dict(TINY)


def _outcome(delay):
    if delay is None:
        return DetectionOutcome(False, None, None, 41, 0.0)
    return DetectionOutcome(True, 41 + delay, delay, 41, 1.0)


def test_config_defaults_and_validation():
    cfg = ExperimentConfig()
    assert cfg.train_pings == 40 and cfg.onset == 41 and cfg.n_mc == 200
    assert cfg.calibration_trials == 200
    assert cfg.scenario_for(inr_db=10.0).inr_db == 10.0
    with pytest.raises(ConfigError):
        ExperimentConfig(train_pings=41)
    with pytest.raises(ConfigError):
        ExperimentConfig(models=())
    with pytest.raises(ConfigError):
        ExperimentConfig(n_calibration=10)
    with pytest.raises(ConfigError):
        ExperimentConfig(h0=1.0)


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        config_from_dict({"n_mc": 5, "bogus": 1})
    with pytest.raises(ConfigError):
        config_from_dict({"scenario": {"depth": 10}})
    with pytest.raises(ConfigError):
        config_from_dict({"snr_grid_db": 5})


def test_config_yaml_round_trip(tmp_path, tiny_cfg):
    p = dump_config(tiny_cfg, tmp_path / "c.yaml")
    assert load_config(p) == tiny_cfg
    (tmp_path / "bad.yaml").write_text("n_mc: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_summarize_cell_and_cdf():
    outs = [_outcome(d) for d in (0, 2, None, 5, 0)]
    c = summarize_cell("md", 10.0, 3.0, outs, n_failed=1)
    assert c.pd == 0.8 and c.n_trials == 5 and c.n_failed == 1
    assert c.mtd_pings == pytest.approx(7 / 4)
    pts = cdf_points("md", 10.0, outs, 8)
    f = np.array([p.cdf for p in pts])
    assert np.all(np.diff(f) >= 0) and f[-1] == c.pd
    empty = summarize_cell("m0", 0.0, 1.0, [_outcome(None)] * 3)
    assert empty.pd == 0.0 and math.isnan(empty.mtd_pings)


def test_metrics_csv_round_trip(tmp_path):
    outs = [_outcome(d) for d in (0, 3, None)]
    cells = [summarize_cell("m0", 0.0, 12.5, [_outcome(None)] * 3),
             summarize_cell("md", 0.0, 1 / 3, outs)]
    s = MetricsSummary(cells, cdf_points("md", 0.0, outs, 5), [("md", 0.0, 1 / 3, 3, 0, 0.0)])
    s.write(tmp_path)
    back = MetricsSummary.read(tmp_path)
    assert back == s
    assert back.cell("md", 0.0).h1 == 1 / 3
    assert math.isnan(back.cell("m0", 0.0).mtd_pings)


def test_run_trial_is_reproducible(tiny_cfg):
    a = ex.run_trial(tiny_cfg, "md", 20.0, 1, h1=5.0)
    b = ex.run_trial(tiny_cfg, "md", 20.0, 1, h1=5.0)
    assert a.error is None
    assert a.outcome.alarm_ping == b.outcome.alarm_ping
    assert a.outcome.max_g == b.outcome.max_g


def test_trace_trial_agrees_with_direct_trial(tiny_cfg):
    r = ex.run_realization(tiny_cfg, 2, "detect")
    trace = r.trace("md", 20.0, True)
    assert trace.shape == (tiny_cfg.scenario.n_pings - tiny_cfg.onset + 1,)
    h1 = float(np.max(trace)) * 0.5 if np.max(trace) > 0 else 0.0
    t = ex.run_trial(tiny_cfg, "md", 20.0, 2, h1=h1)
    from sonarbg.detect import SlrtConfig, outcome_from_trace
    o = outcome_from_trace(trace, tiny_cfg.onset, tiny_cfg.onset, SlrtConfig(h1=h1))
    assert o.alarm_ping == t.outcome.alarm_ping


def test_sweep_writes_outputs(tmp_path, tiny_cfg):
    res = ex.run_sweep(tiny_cfg, tmp_path, plots=True)
    for name in ("pd_vs_snr.csv", "mtd_vs_snr.csv", "cdf_delay.csv", "significance.csv",
                 "false_alarm.csv", "trials.csv", "config.yaml", "pd_vs_snr.png"):
        assert (tmp_path / name).exists(), name
    assert MetricsSummary.read(tmp_path) == res.summary
    for c in res.summary.cells:
        assert 0.0 <= c.pd <= 1.0 and c.n_trials + c.n_failed == tiny_cfg.n_mc
    for m in tiny_cfg.models:
        d, f = res.summary.cdf_curve(m, 10.0)
        assert f[-1] == pytest.approx(res.summary.cell(m, 10.0).pd)


def test_significance_split_helper():
    rows = [{"scenario": "static", "model": "mcd", "p_value": 0.5},
            {"scenario": "static", "model": "mcd", "p_value": 0.01},
            {"scenario": "surface_and_drift", "model": "md", "p_value": 1e-5},
            {"scenario": "surface_and_drift", "model": "md", "p_value": math.nan}]
    out = ex.significance_split(rows)
    assert out == {"static_mcd_rejected": 0.5, "drift_md_strong": 1.0}


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("unknown_key: 1\n")
    assert cli.main(["fit", "--config", str(bad), "--model", "m0"]) == 2
    cfg_path = tmp_path / "tiny.yaml"
    dump_config(config_from_dict(TINY), cfg_path)
    assert cli.main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path)]) == 0
    assert cli.main(["fit", "--config", str(cfg_path), "--model", "md",
                     "--input", str(tmp_path / "pings_trial0.csv")]) == 0
    assert cli.main(["detect", "--config", str(cfg_path), "--model", "m0", "--snr", "20",
                     "--h1", "1.0"]) == 0
    out = capsys.readouterr().out
    assert '"detected"' in out and '"sigma_q2"' in out


def test_cli_numerical_failure_code(tmp_path, monkeypatch):
    from sonarbg.errors import NumericalError

    def boom(*a, **k):
        raise NumericalError("forced")

    monkeypatch.setattr(ex, "run_sweep", boom)
    assert cli.main(["mc", "--out", str(tmp_path)]) == 3


def test_dims_validation():
    with pytest.raises(Exception):
        DimsConfig(n_lags=8, n_basis=16)
    cfg = dataclasses.replace(ExperimentConfig(), workers=2)
    assert cfg.workers == 2
    assert ScenarioConfig().onset == 41
