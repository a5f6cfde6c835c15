"""Two independent acceptance checks for editing pairs, plus corruption injectors.

Checker A works from the edit mask alone; checker B works from colour and
neighbour-difference statistics. A pair is kept only if both accept it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .pairs import EditPair, reference_pixels

UNINTENDED = "unintended editing"
INCOMPLETE = "incomplete removal"
IDENTITY = "identity inconsistency"
INPAINTING = "unnatural inpainting"
REASONS = (IDENTITY, INCOMPLETE, INPAINTING, UNINTENDED)

RESIDUAL_MAX = 0.05
HIST_MIN = 0.9
VARIANCE_RATIO = 3.0
VARIANCE_FLOOR = 1e-4
HIST_BINS = 8

_ERASE_KINDS = ("insert", "remove")


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reasons: tuple[str, ...] = ()

    @property
    def reason(self) -> str | None:
        return self.reasons[0] if self.reasons else None


def color_histogram(pixels: np.ndarray, bins: int = HIST_BINS) -> np.ndarray:
    p = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    q = np.clip((p * bins).astype(np.int64), 0, bins - 1)
    idx = (q[:, 0] * bins + q[:, 1]) * bins + q[:, 2]
    h = np.bincount(idx, minlength=bins ** 3).astype(np.float64)
    return h / h.sum() if h.sum() else h


def histogram_intersection(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.minimum(color_histogram(a), color_histogram(b)).sum())


def neighbor_roughness(video: np.ndarray, region: np.ndarray) -> float:
    """Median squared difference between horizontally or vertically adjacent
    pixels that both lie in ``region``. 0.0 when no such pair exists."""
    v = np.asarray(video, np.float64)
    parts = []
    for axis in (1, 2):
        d = (np.diff(v, axis=axis) ** 2).mean(axis=-1)
        both = np.logical_and(
            np.take(region, range(region.shape[axis] - 1), axis=axis),
            np.take(region, range(1, region.shape[axis]), axis=axis),
        )
        parts.append(d[both])
    vals = np.concatenate(parts)
    return float(np.median(vals)) if len(vals) else 0.0


def check_masks(pair: EditPair) -> list[str]:
    """Checker A: outside-mask equality, residual object inside the mask."""
    reasons = []
    outside = ~pair.edit_mask
    if np.any(pair.source[outside] != pair.target[outside]):
        reasons.append(UNINTENDED)
    if pair.kind in _ERASE_KINDS and pair.edit_mask.any():
        same = np.all(pair.source == pair.target, axis=-1)[pair.edit_mask]
        if same.mean() > RESIDUAL_MAX:
            reasons.append(INCOMPLETE)
    return reasons


def check_statistics(pair: EditPair, reference: np.ndarray | None) -> list[str]:
    """Checker B: reference identity histogram, inpainted-region roughness."""
    reasons = []
    if reference is not None and pair.edit_mask.any() and pair.kind in ("insert", "remove", "modify_subject"):
        ref_px = reference_pixels(reference)
        obj_px = pair.object_video[pair.edit_mask]
        if len(ref_px) == 0 or histogram_intersection(ref_px, obj_px) < HIST_MIN:
            reasons.append(IDENTITY)
    if pair.kind in _ERASE_KINDS and pair.edit_mask.any() and (~pair.edit_mask).any():
        region = neighbor_roughness(pair.clean_video, pair.edit_mask)
        background = neighbor_roughness(pair.clean_video, ~pair.edit_mask)
        if region > VARIANCE_RATIO * max(background, VARIANCE_FLOOR):
            reasons.append(INPAINTING)
    return reasons


def verify_sample(pair: EditPair, reference: np.ndarray | None = None) -> Verdict:
    reasons = check_masks(pair) + check_statistics(pair, reference)
    ordered = tuple(r for r in REASONS if r in reasons)
    return Verdict(not ordered, ordered)


# -- corruption injection -----------------------------------------------------


def corrupt(pair: EditPair, reference: np.ndarray | None, kind: str, seed: int = 0):
    """Inject one artifact class; returns ``(pair, reference)`` copies."""
    rng = np.random.default_rng(seed)
    src, tgt = pair.source.copy(), pair.target.copy()
    ref = None if reference is None else reference.copy()
    mask = pair.edit_mask
    if kind == IDENTITY:
        if ref is None:
            raise ValueError("identity corruption needs a reference image")
        obj = (ref < 1.0).any(axis=-1)
        ref[obj] = 1.0 - ref[obj]
    elif kind == UNINTENDED:
        f, h, w = mask.shape
        for _ in range(1000):
            t = int(rng.integers(f))
            y, x = (int(v) for v in rng.integers(0, [h - 2, w - 2]))
            if not mask[t, y : y + 3, x : x + 3].any():
                tgt[t, y : y + 3, x : x + 3] = (tgt[t, y : y + 3, x : x + 3] + 0.5) % 1.0
                break
        else:
            raise ValueError("no 3x3 patch outside the edit mask")
    elif kind in (INCOMPLETE, INPAINTING):
        if pair.kind not in _ERASE_KINDS:
            raise ValueError(f"{kind} applies to insert/remove pairs, not {pair.kind}")
        clean = tgt if pair.kind == "remove" else src
        obj_video = src if pair.kind == "remove" else tgt
        if kind == INCOMPLETE:
            # leave the top 30% of the object's rows in place in every frame
            for t in range(mask.shape[0]):
                ys, xs = np.nonzero(mask[t])
                if len(ys):
                    order = np.lexsort((xs, ys))[: int(np.ceil(0.3 * len(ys)))]
                    clean[t, ys[order], xs[order]] = obj_video[t, ys[order], xs[order]]
        else:
            noise = rng.uniform(-0.3, 0.3, size=clean.shape).astype(np.float32)
            clean[mask] = np.clip(clean[mask] + noise[mask], 0.0, 1.0)
    else:
        raise ValueError(f"unknown corruption {kind!r}")
    return replace(pair, source=src, target=tgt), ref
