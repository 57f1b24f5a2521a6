"""Figures for a sweep summary (headless backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import MetricsSummary  # noqa: E402


def _models(summary: MetricsSummary) -> list[str]:
    return list(dict.fromkeys(c.model for c in summary.cells))


def plot_summary(summary: MetricsSummary, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for m in _models(summary):
        cs = [c for c in summary.cells if c.model == m]
        ax.plot([c.snr_db for c in cs], [c.pd for c in cs], marker="o", label=m)
    ax.set(xlabel="SNR [dB]", ylabel="probability of detection", ylim=(0, 1.02))
    ax.grid(alpha=0.3)
    ax.legend()
    paths.append(_save(fig, out_dir / "pd_vs_snr.png"))

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for m in _models(summary):
        cs = [c for c in summary.cells if c.model == m]
        snr = [c.snr_db for c in cs]
        ax.plot(snr, [c.mtd_pings for c in cs], marker="o", label=m)
        ax.fill_between(snr, [c.delay_p10 for c in cs], [c.delay_p90 for c in cs], alpha=0.15)
    ax.set(xlabel="SNR [dB]", ylabel="mean delay to detection [pings]")
    ax.grid(alpha=0.3)
    ax.legend()
    paths.append(_save(fig, out_dir / "mtd_vs_snr.png"))

    if summary.cdf:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for m in _models(summary):
            pts = [p for p in summary.cdf if p.model == m]
            if pts:
                d, f = summary.cdf_curve(m, pts[0].snr_db)
                ax.step(d, f, where="post", label=f"{m} @ {pts[0].snr_db:g} dB")
        ax.set(xlabel="delay [pings]", ylabel="P(detected by delay)", ylim=(0, 1.02))
        ax.grid(alpha=0.3)
        ax.legend()
        paths.append(_save(fig, out_dir / "cdf_delay.png"))
    return paths


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
