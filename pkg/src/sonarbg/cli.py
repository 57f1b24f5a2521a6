"""Command-line entry point.

    sonarbg simulate --config F --out D [--trial I] [--snr DB]
    sonarbg fit --config F --model {m0,mc,md,mcd} [--trial I | --input PINGS]
    sonarbg significance --config F [--inr-grid 0 10 20 30] [--replicates R]
    sonarbg detect --config F --model M --snr DB [--trial I] [--h1 H]
    sonarbg mc --config F [--out D] [--workers W]

Exit status: 0 on success, 2 on configuration errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

from .errors import ConfigError, DimensionError, FitError, NumericalError, ParameterError
from .harness import experiment
from .harness.config import ExperimentConfig, load_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _db(text: str) -> float:
    return -math.inf if text.strip().lower() in ("-inf", "none") else float(text)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sonarbg", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", type=Path, help="YAML experiment config (defaults if omitted)")
        return sp

    sp = add("simulate", "render one background run (optionally with target) to a ping file")
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--trial", type=int, default=0)
    sp.add_argument("--snr", type=_db, default=None, help="add the target at this SNR [dB]")

    sp = add("fit", "fit one model's hyperparameters on the training pings")
    sp.add_argument("--model", required=True, choices=["m0", "mc", "md", "mcd"])
    sp.add_argument("--trial", type=int, default=0)
    sp.add_argument("--input", type=Path, help="ping file to fit instead of a simulated run")

    sp = add("significance", "Wilks tests over scenarios and INR levels")
    sp.add_argument("--inr-grid", type=float, nargs="+", default=None)
    sp.add_argument("--scenarios", nargs="+", default=list(experiment.ALL_SCENARIOS))
    sp.add_argument("--replicates", type=int, default=None)
    sp.add_argument("--out", type=Path, default=None)

    sp = add("detect", "one detection trial")
    sp.add_argument("--model", required=True, choices=["m0", "mc", "md", "mcd"])
    sp.add_argument("--snr", type=_db, required=True)
    sp.add_argument("--trial", type=int, default=0)
    sp.add_argument("--h1", type=float, default=None,
                    help="upper threshold; calibrated from n_calibration null runs if omitted")

    sp = add("mc", "full Monte Carlo sweep")
    sp.add_argument("--out", type=Path, default=None)
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--no-plots", action="store_true")
    return p


def _config(args) -> ExperimentConfig:
    return load_config(args.config) if args.config else ExperimentConfig()


def _print(obj):
    print(json.dumps(obj, indent=2, default=float))


def cmd_simulate(cfg, args):
    from .oceansim import write_ping_file

    run = experiment.simulate(cfg, args.trial)
    y = run.pings(args.snr, target=args.snr is not None)
    args.out.mkdir(parents=True, exist_ok=True)
    path = write_ping_file(args.out / f"pings_trial{args.trial}.csv", y, cfg.waveform.dt_s)
    _print({"file": str(path), "n_pings": y.shape[0], "n_rows": y.shape[1]})


def cmd_fit(cfg, args):
    from . import learn
    from .oceansim import read_ping_file
    from .tracker import PingRecord

    ws = experiment.workspace(cfg)
    if args.input is not None:
        y, dt = read_ping_file(args.input)
        if abs(dt - cfg.waveform.dt_s) > 1e-12 or y.shape[1] != cfg.dims.n_rows:
            raise ConfigError("ping file does not match the configured waveform/dimensions")
        records = [PingRecord(y[k - 1], k) for k in range(1, min(cfg.train_pings, len(y)) + 1)]
    else:
        records = experiment.simulate(cfg, args.trial).records(None, last=cfg.train_pings)
    res = learn.fit(records, args.model, ws.model, cfg.scenario.sigma_e2)
    _print({"model": res.kind.value, "loglik": res.loglik, "n_evals": res.n_evals,
            "converged": res.converged, **res.hp_hat.as_dict()})


def cmd_significance(cfg, args):
    if args.replicates is not None:
        cfg = dataclasses.replace(cfg, significance_replicates=args.replicates)
    rows = experiment.run_significance_sweep(cfg, args.inr_grid, tuple(args.scenarios),
                                             out_dir=args.out or cfg.output_dir)
    for r in rows:
        print(f"{r['scenario']:>18s} INR {r['inr_db']:5.1f}  {r['model']:>3s}  "
              f"2T={r['stat_2T']:10.3f}  p={r['p_value']:.3g}")


def cmd_detect(cfg, args):
    h1 = args.h1
    if h1 is None:
        calib = experiment.map_realizations(
            dataclasses.replace(cfg, models=(args.model,), snr_grid_db=(args.snr,)),
            [(i, "calibrate") for i in range(cfg.calibration_trials)])
        h1 = experiment.calibrate_thresholds(
            dataclasses.replace(cfg, models=(args.model,), snr_grid_db=(args.snr,)),
            calib)[(args.model, args.snr)]
    t = experiment.run_trial(cfg, args.model, args.snr, args.trial, h1)
    if t.outcome is None:
        raise NumericalError(t.error or "trial failed")
    o = t.outcome
    _print({"trial": t.trial_id, "model": t.model, "snr_db": t.snr_db, "h1": h1,
            "detected": o.detected, "alarm_ping": o.alarm_ping, "delay": o.delay,
            "max_g": o.max_g})


def cmd_mc(cfg, args):
    if args.workers is not None:
        cfg = dataclasses.replace(cfg, workers=args.workers)
    out = args.out or Path(cfg.output_dir)
    res = experiment.run_sweep(cfg, out, plots=not args.no_plots)
    for c in res.summary.cells:
        print(f"{c.model:>3s} SNR {c.snr_db:5.1f}  h1={c.h1:9.3f}  Pd={c.pd:.3f}  "
              f"MTD={c.mtd_pings:.2f}  failed={c.n_failed}")
    print(f"results written to {out}")


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "significance": cmd_significance,
            "detect": cmd_detect, "mc": cmd_mc}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](cfg, args)
    except (ConfigError, ParameterError, DimensionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
