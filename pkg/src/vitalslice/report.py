"""Benchmark tables: accuracy per channel, stage latency, paired tests.

All percent errors shown here are normalized by the mean of the true
values; every rendered document states that so the numbers can be
interpreted without reading the code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .metrics import StatTestResult, f1_alerts, mae_pct, r2, rmse_pct
from .pipeline import StageStats

REPORT_VERSION = 1
NORMALIZATION_NOTE = "percent errors are normalized by the mean of the true values"


@dataclass(frozen=True)
class ChannelMetrics:
    channel: str
    mae_pct: float
    rmse_pct: float
    r2: float
    f1: float


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple
    n_samples: int


def compute_metrics(y_true, y_pred, channels, rules=()) -> MetricsReport:
    """Per-channel accuracy table.

    F1 uses the alert rules as the labeling function on both the true and
    predicted values; channels without a rule have no positives on either
    side and score 1.0 by the degenerate-agreement convention.
    """
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    channels = tuple(channels)
    if y_true.shape != y_pred.shape or y_true.ndim != 2:
        raise ShapeError("y_true and y_pred must both be (n_samples, n_channels)")
    if y_true.shape[1] != len(channels):
        raise ShapeError(
            f"{len(channels)} channel names for {y_true.shape[1]} columns"
        )
    rules_by_channel = {}
    for rule in rules:
        rules_by_channel.setdefault(rule.channel, []).append(rule)
    rows = []
    for i, name in enumerate(channels):
        t, p = y_true[:, i], y_pred[:, i]
        true_labels = np.zeros(len(t), dtype=bool)
        pred_labels = np.zeros(len(t), dtype=bool)
        for rule in rules_by_channel.get(name, []):
            true_labels |= (t < rule.low) | (t > rule.high)
            pred_labels |= (p < rule.low) | (p > rule.high)
        rows.append(
            ChannelMetrics(
                channel=name,
                mae_pct=mae_pct(t, p),
                rmse_pct=rmse_pct(t, p),
                r2=r2(t, p),
                f1=f1_alerts(true_labels, pred_labels),
            )
        )
    return MetricsReport(rows=tuple(rows), n_samples=y_true.shape[0])


# ---------------------------------------------------------------------------
# Latency table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FormattedTable:
    csv: str
    text: str


def latency_table(stats) -> FormattedTable:
    """Stage rows plus total, columns average/peak/std, as CSV and as an
    aligned text table."""
    stats = tuple(stats)
    if not stats:
        raise ConfigError("latency table needs at least one stage row")
    csv_lines = ["stage,average_ms,peak_ms,std_ms"]
    for row in stats:
        csv_lines.append(
            f"{row.stage},{row.average_ms!r},{row.peak_ms!r},{row.std_ms!r}"
        )
    csv = "\n".join(csv_lines) + "\n"

    headers = ("Stage", "Average (ms)", "Peak (ms)", "Std (ms)")
    cells = [
        (
            row.stage.capitalize(),
            f"{row.average_ms:.6g}",
            f"{row.peak_ms:.6g}",
            f"{row.std_ms:.6g}",
        )
        for row in stats
    ]
    widths = [
        max(len(headers[c]), max(len(r[c]) for r in cells)) for c in range(4)
    ]
    def fmt(row):
        first = row[0].ljust(widths[0])
        rest = [row[c].rjust(widths[c]) for c in range(1, 4)]
        return "  ".join([first] + rest)

    text_lines = [fmt(headers), fmt(tuple("-" * w for w in widths))]
    text_lines.extend(fmt(r) for r in cells)
    return FormattedTable(csv=csv, text="\n".join(text_lines) + "\n")


# ---------------------------------------------------------------------------
# Combined report
# ---------------------------------------------------------------------------


def _metrics_section(metrics: MetricsReport | None):
    if metrics is None:
        return []
    return [
        {
            "channel": row.channel,
            "mae_pct": row.mae_pct,
            "rmse_pct": row.rmse_pct,
            "r2": row.r2,
            "f1": row.f1,
        }
        for row in metrics.rows
    ]


def _latency_section(latency):
    if latency is None:
        return []
    return [
        {
            "stage": row.stage,
            "average_ms": row.average_ms,
            "peak_ms": row.peak_ms,
            "std_ms": row.std_ms,
        }
        for row in latency
    ]


def _stat_section(stat_tests):
    if stat_tests is None:
        return []
    section = []
    for label, result in stat_tests:
        section.append(
            {
                "comparison": label,
                "t": _json_float(result.t),
                "p": result.p,
                "cohens_d": _json_float(result.cohens_d),
                "significant": result.significant,
                "df": result.df,
            }
        )
    return section


def _json_float(value: float):
    # JSON has no infinities; keep the document parseable everywhere
    if value == float("inf"):
        return "inf"
    if value == float("-inf"):
        return "-inf"
    return value


def render_report(
    metrics: MetricsReport | None = None,
    latency=None,
    stat_tests=None,
    fmt: str = "json",
) -> str:
    """Schema-versioned document with stable field ordering.

    JSON always carries all three sections (empty lists when not
    provided); CSV emits one bracket-headed block per provided section.
    """
    if fmt == "json":
        doc = {
            "version": REPORT_VERSION,
            "normalization": NORMALIZATION_NOTE,
            "metrics": _metrics_section(metrics),
            "latency": _latency_section(latency),
            "stat_tests": _stat_section(stat_tests),
        }
        return json.dumps(doc, indent=2)
    if fmt == "csv":
        blocks = []
        if metrics is not None:
            lines = [
                "[metrics]",
                f"# {NORMALIZATION_NOTE}",
                "channel,mae_pct,rmse_pct,r2,f1",
            ]
            for row in metrics.rows:
                lines.append(
                    f"{row.channel},{row.mae_pct!r},{row.rmse_pct!r},"
                    f"{row.r2!r},{row.f1!r}"
                )
            blocks.append("\n".join(lines))
        if latency is not None:
            lines = ["[latency]", "stage,average_ms,peak_ms,std_ms"]
            for row in latency:
                lines.append(
                    f"{row.stage},{row.average_ms!r},{row.peak_ms!r},{row.std_ms!r}"
                )
            blocks.append("\n".join(lines))
        if stat_tests is not None:
            lines = ["[stat_tests]", "comparison,t,p,cohens_d,significant,df"]
            for label, result in stat_tests:
                lines.append(
                    f"{label},{result.t!r},{result.p!r},{result.cohens_d!r},"
                    f"{int(result.significant)},{result.df}"
                )
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + ("\n" if blocks else "")
    raise ConfigError(f"unknown report format {fmt!r}; use 'json' or 'csv'")
