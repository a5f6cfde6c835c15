"""Proxy metrics for generated videos and the evaluation report.

All metrics work in pixel space on (F, H, W, 3) arrays in [0, 1]. They are
proxies: boundary fidelity stands in for smooth first/last-frame transitions,
masked MSE for preservation of unedited regions, and colour-histogram
intersection for subject identity.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from .datagen.verify import histogram_intersection

COLUMNS = (
    "sample", "task", "recon_mse", "psnr", "boundary_first", "boundary_last",
    "preservation_error", "identity_score",
)
METRIC_COLUMNS = COLUMNS[2:]
PSNR_CAP = 100.0

REPORT_HEADER = (
    "# Proxy metrics. recon_mse/psnr: generated vs ground-truth target.\n"
    "# boundary_*: MSE of generated first/last frame vs the conditioning frame.\n"
    "# preservation_error: MSE outside the edit mask vs the source video.\n"
    "# identity_score: colour-histogram intersection of reference object vs masked output.\n"
)


class MetricError(ValueError):
    pass


def _check(a, b, what):
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise MetricError(f"{what}: shape mismatch {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _check(a, b, "mse")
    return float(np.mean((a - b) ** 2))


def psnr(a, b) -> float:
    err = mse(a, b)
    if err <= 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * math.log10(1.0 / err)))


def boundary_frame_error(generated, first, last) -> tuple[float, float]:
    g = np.asarray(generated, np.float64)
    if g.ndim != 4:
        raise MetricError(f"generated video must be rank 4, got {g.shape}")
    return mse(g[0], first), mse(g[-1], last)


def preservation_error(source, generated, mask) -> float:
    s, g = _check(source, generated, "preservation_error")
    keep = ~np.asarray(mask, bool)
    if keep.shape != s.shape[:-1]:
        raise MetricError(f"mask shape {keep.shape} does not match video {s.shape[:-1]}")
    if not keep.any():
        raise MetricError("mask complement is empty")
    return float(np.mean((s[keep] - g[keep]) ** 2))


def identity_score(reference, generated, mask) -> float:
    """Histogram intersection between the reference object and the masked
    region, averaged over frames where the region is non-empty."""
    ref = np.asarray(reference, np.float64)
    g = np.asarray(generated, np.float64)
    m = np.asarray(mask, bool)
    if m.shape != g.shape[:-1]:
        raise MetricError(f"mask shape {m.shape} does not match video {g.shape[:-1]}")
    if not m.any():
        raise MetricError("empty region mask")
    ref_px = ref[(ref < 1.0).any(axis=-1)]
    if len(ref_px) == 0:
        raise MetricError("reference image has no object pixels")
    scores = [histogram_intersection(ref_px, g[t][m[t]]) for t in range(g.shape[0]) if m[t].any()]
    return float(np.mean(scores))


def _fmt(v) -> str:
    return "" if v is None else f"{float(v):.6f}"


def aggregate(rows) -> dict:
    out = {}
    for col in METRIC_COLUMNS:
        vals = np.array([r[col] for r in rows if r.get(col) is not None], dtype=np.float64)
        out[col] = (float(vals.mean()), float(vals.std()), len(vals)) if len(vals) else None
    return out


def render_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([r["sample"], r["task"]] + [_fmt(r.get(c)) for c in METRIC_COLUMNS])
    return buf.getvalue()


def render_table(rows, meta: dict | None = None) -> str:
    agg = aggregate(rows)
    lines = [REPORT_HEADER.rstrip("\n")]
    for k, v in sorted((meta or {}).items()):
        lines.append(f"# {k}: {v}")
    lines.append(f"{'metric':<20}{'mean':>12}{'std':>12}{'n':>6}")
    for col in METRIC_COLUMNS:
        a = agg[col]
        if a is None:
            lines.append(f"{col:<20}{'-':>12}{'-':>12}{0:>6}")
        else:
            lines.append(f"{col:<20}{a[0]:>12.6f}{a[1]:>12.6f}{a[2]:>6}")
    return "\n".join(lines) + "\n"


def emit_report(rows, out_dir, meta: dict | None = None) -> tuple[Path, Path]:
    """Write ``report.csv`` and ``report.txt``; bytes depend only on rows and meta."""
    rows = list(rows)
    if not rows:
        raise MetricError("report needs at least one row")
    for r in rows:
        for c in METRIC_COLUMNS:
            v = r.get(c)
            if v is not None and not math.isfinite(v):
                raise MetricError(f"non-finite {c} in row {r['sample']}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, txt_path = out / "report.csv", out / "report.txt"
    csv_path.write_text(render_csv(rows), encoding="utf-8", newline="")
    txt_path.write_text(render_table(rows, meta), encoding="utf-8", newline="")
    return csv_path, txt_path
