"""Figure rendering for sweep tables and simulation summaries.

All functions write PNG files; the Agg backend keeps them usable in
headless runs.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .limits import LimitRow  # noqa: E402
from .sim import ExchangeMetrics  # noqa: E402

__all__ = [
    "save_length_vs_period",
    "save_rate_vs_period",
    "save_length_vs_reply_gap",
    "save_simulation_summary",
]

_STYLE = {
    "traditional": dict(color="#555555", marker="", linestyle="--", label="traditional"),
    "srw_offset": dict(color="#1f77b4", marker="o", linestyle="-", label="srw (offset)"),
    "srw_offsetless": dict(color="#17becf", marker="s", linestyle="-", label="srw (offsetless)"),
    "crw": dict(color="#d62728", marker="^", linestyle="-", label="crw"),
    "jfs": dict(color="#2ca02c", marker="v", linestyle="-", label="jfs"),
    "jfc": dict(color="#9467bd", marker="d", linestyle="-", label="jfc"),
}


def _by_scheme(rows: Sequence[LimitRow]) -> dict[str, list[LimitRow]]:
    out: dict[str, list[LimitRow]] = {}
    for r in rows:
        out.setdefault(r.scheme, []).append(r)
    return out


def _period_axis(chunk_rate: float | None) -> str:
    return "exchange period (s)" if chunk_rate else "chunks per exchange round"


def _periods(rows: Sequence[LimitRow], chunk_rate: float | None) -> list[float]:
    return [r.gt / chunk_rate if chunk_rate else float(r.gt) for r in rows]


def save_length_vs_period(rows: Sequence[LimitRow], chunk_rate: float | None,
                          path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for scheme, group in _by_scheme(rows).items():
        ax.plot(_periods(group, chunk_rate), [r.bits for r in group],
                **_STYLE.get(scheme, dict(label=scheme)))
    ax.set_xlabel(_period_axis(chunk_rate))
    ax.set_ylabel("mean compressed bitmap (bits)")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)


def save_rate_vs_period(rows: Sequence[LimitRow], chunk_rate: float | None,
                        path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for scheme, group in _by_scheme(rows).items():
        ax.plot(_periods(group, chunk_rate), [r.bits_per_period for r in group],
                **_STYLE.get(scheme, dict(label=scheme)))
    ax.set_xlabel(_period_axis(chunk_rate))
    ax.set_ylabel("bitmap send rate (bits/s)" if chunk_rate else "bits per chunk")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)


def save_length_vs_reply_gap(rows: Sequence[LimitRow], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for scheme, group in _by_scheme(rows).items():
        ax.plot([r.gtau for r in group], [r.bits for r in group],
                **_STYLE.get(scheme, dict(label=scheme)))
    ax.set_xlabel("reply gap (chunks)")
    ax.set_ylabel("mean compressed bitmap (bits)")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)


def save_simulation_summary(metrics: ExchangeMetrics, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    labels, measured, analytic, errs = [], [], [], []
    for name, d in (("ab raw", metrics.ab), ("ba raw", metrics.ba)):
        labels.append(name)
        measured.append(d.mean_raw_bits)
        analytic.append(d.analytic_raw_bits)
        errs.append(2 * d.se_raw_bits)
    if metrics.ab.mean_ideal_bits is not None:
        for name, d in (("ab coded", metrics.ab), ("ba coded", metrics.ba)):
            labels.append(name)
            measured.append(d.mean_ideal_bits)
            analytic.append(d.analytic_ideal_bits)
            errs.append(2 * d.se_ideal_bits)
    x = range(len(labels))
    ax.bar([i - 0.2 for i in x], measured, width=0.4, yerr=errs, capsize=3,
           label="simulated", color="#1f77b4")
    ax.bar([i + 0.2 for i in x], analytic, width=0.4, label="analytic",
           color="#d62728", alpha=0.8)
    ax.set_xticks(list(x), labels)
    ax.set_ylabel("bits per message")
    ax.set_title(f"{metrics.codec}, {metrics.channel} channel")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def _finish(fig: plt.Figure, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
