"""Aggregate metrics.jsonl files across seeds into SVG charts and CSV tables."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_METRICS = ("mean_extrinsic_return", "success_rate", "mean_bonus", "mu_bonus", "sigma_bonus",
                   "policy_loss", "value_loss", "entropy", "novelty_loss", "memory_occupancy")


class PlotError(ValueError):
    pass


@dataclass
class Series:
    metric: str
    epochs: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n: np.ndarray


def read_metrics(path) -> tuple[list[dict], int]:
    """Parse one JSONL file; malformed lines are skipped and counted."""
    records, bad = [], 0
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict) or not isinstance(rec.get("epoch"), int):
                    raise ValueError("missing integer epoch")
            except ValueError as exc:
                bad += 1
                log.warning("%s:%d: skipping malformed line (%s)", path, lineno, exc)
                continue
            records.append(rec)
    return records, bad


def find_metric_files(root) -> list[Path]:
    root = Path(root)
    if root.is_file():
        return [root]
    return sorted(root.rglob("metrics.jsonl"))


def aggregate(runs: list[list[dict]], metric: str) -> Series:
    """Mean and population std per epoch over the runs that report a number."""
    by_epoch: dict[int, list[float]] = {}
    for records in runs:
        for rec in records:
            v = rec.get(metric)
            if isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v):
                by_epoch.setdefault(rec["epoch"], []).append(float(v))
    if not by_epoch:
        raise PlotError(f"empty series for {metric!r}")
    epochs = np.array(sorted(by_epoch))
    stats = [_mean_std(by_epoch[e]) for e in epochs]
    return Series(metric, epochs, np.array([m for m, _ in stats]), np.array([s for _, s in stats]),
                  np.array([len(by_epoch[e]) for e in epochs]))


def _mean_std(values: list[float]) -> tuple[float, float]:
    # shifting by the first value keeps a constant series exactly constant
    ref = values[0]
    mean = ref + math.fsum(v - ref for v in values) / len(values)
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / len(values))


def series_csv(series: Series, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\r\n")
        w.writerow(["epoch", "mean", "std", "n"])
        for e, m, s, n in zip(series.epochs, series.mean, series.std, series.n):
            w.writerow([int(e), repr(float(m)), repr(float(s)), int(n)])


def series_svg(series: Series, width: int = 480, height: int = 300) -> str:
    pad_l, pad_r, pad_t, pad_b = 56, 16, 28, 36
    x0, x1 = float(series.epochs[0]), float(series.epochs[-1])
    lo = float((series.mean - series.std).min())
    hi = float((series.mean + series.std).max())
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    if x1 <= x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def px(x):
        return pad_l + (x - x0) / (x1 - x0) * pw

    def py(y):
        return pad_t + (hi - y) / (hi - lo) * ph

    upper = [f"{px(e):.2f},{py(m + s):.2f}" for e, m, s in zip(series.epochs, series.mean, series.std)]
    lower = [f"{px(e):.2f},{py(m - s):.2f}" for e, m, s in zip(series.epochs, series.mean, series.std)]
    line = [f"{px(e):.2f},{py(m):.2f}" for e, m in zip(series.epochs, series.mean)]
    title = escape(f"{series.metric} (mean ± std, max n={int(series.n.max())})")
    return "\n".join([
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-family="sans-serif" '
        f'font-size="13">{title}</text>',
        f'<line x1="{pad_l}" y1="{pad_t + ph}" x2="{pad_l + pw}" y2="{pad_t + ph}" stroke="black"/>',
        f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{pad_t + ph}" stroke="black"/>',
        f'<text x="{pad_l}" y="{height - 12}" font-family="sans-serif" font-size="11">{x0:g}</text>',
        f'<text x="{pad_l + pw}" y="{height - 12}" text-anchor="end" font-family="sans-serif" '
        f'font-size="11">{x1:g}</text>',
        f'<text x="{pad_l - 4}" y="{pad_t + 10}" text-anchor="end" font-family="sans-serif" '
        f'font-size="11">{hi:.3g}</text>',
        f'<text x="{pad_l - 4}" y="{pad_t + ph}" text-anchor="end" font-family="sans-serif" '
        f'font-size="11">{lo:.3g}</text>',
        f'<polygon points="{" ".join(upper + lower[::-1])}" fill="steelblue" fill-opacity="0.25" '
        f'stroke="none"/>',
        f'<polyline points="{" ".join(line)}" fill="none" stroke="steelblue" stroke-width="1.5"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="11">epoch</text>',
        "</svg>",
        "",
    ])


def emit_plots(in_dir, out_dir, metrics=DEFAULT_METRICS) -> dict:
    """Write ``<metric>.svg`` and ``<metric>.csv`` for every metric with data.

    Each metrics file counts as one seed. Raises PlotError when no file holds
    a usable record.
    """
    files = find_metric_files(in_dir)
    if not files:
        raise PlotError(f"no metrics.jsonl under {in_dir}")
    runs, skipped = [], 0
    for path in files:
        records, bad = read_metrics(path)
        skipped += bad
        if records:
            runs.append(records)
    if not runs:
        raise PlotError("empty series: no valid metrics records")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in metrics:
        try:
            series = aggregate(runs, metric)
        except PlotError:
            continue
        (out / f"{metric}.svg").write_text(series_svg(series))
        series_csv(series, out / f"{metric}.csv")
        written.append(metric)
    if not written:
        raise PlotError("empty series: none of the requested metrics has data")
    if skipped:
        log.warning("skipped %d malformed metrics line(s)", skipped)
    return {"files": len(files), "runs": len(runs), "skipped_lines": skipped, "metrics": written}
