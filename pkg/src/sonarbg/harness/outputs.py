"""Writers for sweep artifacts: CSV tables, the resolved config and figures."""

from __future__ import annotations

import csv
from pathlib import Path

from .config import ExperimentConfig, dump_config
from .metrics import MetricsSummary, _fmt


def write_rows(out_dir, name: str, rows: list[dict]) -> Path:
    """Dict rows to CSV; columns follow the first row, extra keys are appended."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cols: list[str] = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    path = out_dir / name
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) if c in r else "" for c in cols])
    return path


def write_sweep_outputs(out_dir, cfg: ExperimentConfig, summary: MetricsSummary, trials,
                        significance, plots: bool = True) -> list[Path]:
    out_dir = Path(out_dir)
    paths = summary.write(out_dir)
    paths.append(write_rows(out_dir, "trials.csv", trials))
    paths.append(write_rows(out_dir, "significance.csv", significance))
    paths.append(dump_config(cfg, out_dir / "config.yaml"))
    if plots:
        from .plotting import plot_summary
        paths.extend(plot_summary(summary, out_dir))
    return paths
