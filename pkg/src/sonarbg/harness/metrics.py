"""Detection metrics per (model, SNR) cell and their CSV form."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

PD_FILE = "pd_vs_snr.csv"
MTD_FILE = "mtd_vs_snr.csv"
CDF_FILE = "cdf_delay.csv"
FA_FILE = "false_alarm.csv"


@dataclass(frozen=True)
class CellMetrics:
    model: str
    snr_db: float
    h1: float
    n_trials: int
    n_failed: int
    n_detected: int
    pd: float
    mtd_pings: float
    delay_p10: float
    delay_p90: float


@dataclass(frozen=True)
class CdfPoint:
    model: str
    snr_db: float
    delay_pings: int
    cdf: float


@dataclass(frozen=True)
class FalseAlarmCell:
    model: str
    snr_db: float
    h1: float
    n_trials: int
    n_alarms: int
    pfa: float


def summarize_cell(model: str, snr_db: float, h1: float, outcomes, n_failed: int = 0
                   ) -> CellMetrics:
    """Pd over the trials that ran; delay statistics over the detected ones.

    Failed trials are excluded from the denominator and reported separately.
    """
    n = len(outcomes)
    delays = np.array([o.delay for o in outcomes if o.detected], dtype=float)
    pd = delays.size / n if n else math.nan
    if delays.size:
        mtd = float(delays.mean())
        p10, p90 = (float(v) for v in np.percentile(delays, [10, 90]))
    else:
        mtd = p10 = p90 = math.nan
    return CellMetrics(model, float(snr_db), float(h1), n, int(n_failed), int(delays.size), pd,
                       mtd, p10, p90)


def cdf_points(model: str, snr_db: float, outcomes, horizon: int) -> list[CdfPoint]:
    """Empirical P(detected with delay <= d) for d = 0 .. horizon-1.

    Undetected trials count in the denominator only, so the curve plateaus at Pd.
    """
    n = len(outcomes)
    delays = np.array([o.delay for o in outcomes if o.detected], dtype=int)
    out = []
    for d in range(horizon):
        frac = float(np.count_nonzero(delays <= d)) / n if n else math.nan
        out.append(CdfPoint(model, float(snr_db), d, frac))
    return out


def _same(a, b) -> bool:
    if isinstance(a, float) and isinstance(b, float):
        return (math.isnan(a) and math.isnan(b)) or a == b
    return a == b


def _rows_equal(xs, ys) -> bool:
    if len(xs) != len(ys):
        return False
    return all(all(_same(a, b) for a, b in zip(astuple(x), astuple(y))) for x, y in zip(xs, ys))


@dataclass(eq=False)
class MetricsSummary:
    cells: list
    cdf: list
    false_alarm: list

    def __post_init__(self):
        self.false_alarm = [f if isinstance(f, FalseAlarmCell) else FalseAlarmCell(*f)
                            for f in self.false_alarm]

    def __eq__(self, other) -> bool:
        # NaN marks "no detections"; two empty cells compare equal
        if not isinstance(other, MetricsSummary):
            return NotImplemented
        return (_rows_equal(self.cells, other.cells) and _rows_equal(self.cdf, other.cdf)
                and _rows_equal(self.false_alarm, other.false_alarm))

    def cell(self, model: str, snr_db: float) -> CellMetrics:
        for c in self.cells:
            if c.model == model and c.snr_db == float(snr_db):
                return c
        raise KeyError((model, snr_db))

    def cdf_curve(self, model: str, snr_db: float) -> tuple[np.ndarray, np.ndarray]:
        pts = [p for p in self.cdf if p.model == model and p.snr_db == float(snr_db)]
        return (np.array([p.delay_pings for p in pts]), np.array([p.cdf for p in pts]))

    def pfa(self, model: str) -> FalseAlarmCell:
        for f in self.false_alarm:
            if f.model == model:
                return f
        raise KeyError(model)

    def write(self, out_dir) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        pd_cols = ("model", "snr_db", "h1", "n_trials", "n_failed", "n_detected", "pd")
        mtd_cols = ("model", "snr_db", "n_detected", "mtd_pings", "delay_p10", "delay_p90")
        paths = [
            _write(out_dir / PD_FILE, pd_cols, [_pick(c, pd_cols) for c in self.cells]),
            _write(out_dir / MTD_FILE, mtd_cols, [_pick(c, mtd_cols) for c in self.cells]),
            _write(out_dir / CDF_FILE, _names(CdfPoint), [astuple(p) for p in self.cdf]),
            _write(out_dir / FA_FILE, _names(FalseAlarmCell), [astuple(f) for f in self.false_alarm]),
        ]
        return paths

    @classmethod
    def read(cls, out_dir) -> "MetricsSummary":
        out_dir = Path(out_dir)
        pd_rows = _read(out_dir / PD_FILE)
        mtd_rows = {(r["model"], float(r["snr_db"])): r for r in _read(out_dir / MTD_FILE)}
        cells = []
        for r in pd_rows:
            m = mtd_rows[(r["model"], float(r["snr_db"]))]
            cells.append(CellMetrics(r["model"], float(r["snr_db"]), float(r["h1"]),
                                     int(r["n_trials"]), int(r["n_failed"]), int(r["n_detected"]),
                                     float(r["pd"]), float(m["mtd_pings"]), float(m["delay_p10"]),
                                     float(m["delay_p90"])))
        cdf = [CdfPoint(r["model"], float(r["snr_db"]), int(r["delay_pings"]), float(r["cdf"]))
               for r in _read(out_dir / CDF_FILE)]
        fa = [FalseAlarmCell(r["model"], float(r["snr_db"]), float(r["h1"]), int(r["n_trials"]),
                             int(r["n_alarms"]), float(r["pfa"]))
              for r in _read(out_dir / FA_FILE)]
        return cls(cells, cdf, fa)


def _names(cls) -> tuple:
    return tuple(f.name for f in fields(cls))


def _pick(obj, cols) -> tuple:
    return tuple(getattr(obj, c) for c in cols)


def _fmt(v) -> str:
    # repr keeps every float bit, so a CSV round trip is exact
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _write(path: Path, cols, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _read(path: Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
