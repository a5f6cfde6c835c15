"""Paired editing data: source video, target video, instruction, edit mask."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .scene import (
    BASE_NAMES, COLOR_NAMES, PALETTE, PATTERNS, SceneSpec, random_object, rasterize, render, trajectory,
)

EDIT_KINDS = ("style", "insert", "remove", "modify_subject", "modify_background")
LOCAL_KINDS = ("insert", "remove", "modify_subject", "modify_background")


class PairError(ValueError):
    pass


@dataclass
class EditPair:
    source: np.ndarray  # (F, H, W, 3)
    target: np.ndarray
    instruction: str
    edit_mask: np.ndarray  # (F, H, W) bool
    kind: str
    subject: dict = field(default_factory=dict)  # {"shape", "color"} for object edits

    @property
    def object_video(self) -> np.ndarray:
        """The side of the pair that shows the edited object."""
        return self.source if self.kind == "remove" else self.target

    @property
    def clean_video(self) -> np.ndarray:
        """The side with the object erased (insert/remove pairs only)."""
        return self.target if self.kind == "remove" else self.source


# -- styles -------------------------------------------------------------------

_LUMA = np.array([0.2126, 0.7152, 0.0722], dtype=np.float32)


def _dot3(x, w):
    # explicit sum instead of matmul: BLAS blocking would make the result
    # depend on the array layout, not just on the pixel
    return x[..., 0] * w[0] + x[..., 1] * w[1] + x[..., 2] * w[2]


def _gray(x):
    y = _dot3(x, _LUMA)
    return np.repeat(y[..., None], 3, axis=-1)


def _mix(m):
    m = np.asarray(m, dtype=np.float32)
    return lambda x: np.stack([_dot3(x, row) for row in m], axis=-1)


def _tint(mul, add):
    mul, add = np.float32(mul), np.float32(add)
    return lambda x: x * mul + add


STYLES = (
    ("identity", lambda x: x),
    ("grayscale", _gray),
    ("sepia", _mix([[0.393, 0.769, 0.189], [0.349, 0.686, 0.168], [0.272, 0.534, 0.131]])),
    ("inverted", lambda x: 1.0 - x),
    ("hue shift green", lambda x: x[..., [1, 2, 0]]),
    ("hue shift blue", lambda x: x[..., [2, 0, 1]]),
    ("channel swap", lambda x: x[..., [2, 1, 0]]),
    ("bright pastel", lambda x: np.sqrt(x)),
    ("dark ink", lambda x: x * x),
    ("high contrast", lambda x: 0.5 + 1.5 * (x - 0.5)),
    ("faded film", lambda x: 0.5 + 0.5 * (x - 0.5)),
    ("warm sunset", _tint([1.1, 1.0, 0.8], [0.05, 0.0, 0.0])),
    ("cool winter", _tint([0.8, 0.95, 1.1], [0.0, 0.0, 0.05])),
    ("poster", lambda x: np.round(x * 3.0) / 3.0),
    ("solarized", lambda x: np.where(x > 0.5, 1.0 - x, x)),
    ("sunny", _tint([1.15, 1.1, 0.9], [0.05, 0.05, 0.0])),
    ("snowy", lambda x: 0.6 * x + 0.4),
    ("night", _tint([0.3, 0.35, 0.55], [0.0, 0.0, 0.05])),
)
N_STYLES = len(STYLES)


def apply_style(video: np.ndarray, style_id: int) -> np.ndarray:
    if not 0 <= style_id < N_STYLES:
        raise PairError(f"unknown style id {style_id}; expected 0..{N_STYLES - 1}")
    out = STYLES[style_id][1](np.asarray(video, dtype=np.float32))
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def edge_map(video: np.ndarray, threshold: float = 0.08) -> np.ndarray:
    """Pixels whose right or lower neighbour differs by more than ``threshold``."""
    v = np.asarray(video, dtype=np.float32)
    e = np.zeros(v.shape[:-1], dtype=bool)
    e[..., :, :-1] |= np.abs(np.diff(v, axis=-2)).max(-1) > threshold
    e[..., :-1, :] |= np.abs(np.diff(v, axis=-3)).max(-1) > threshold
    return e


def make_style_pair(video: np.ndarray, style_id: int) -> EditPair:
    target = apply_style(video, style_id)
    name = STYLES[style_id][0]
    mask = np.ones(np.shape(video)[:-1], dtype=bool)
    return EditPair(np.asarray(video, np.float32), target, f"render the video in a {name} style", mask, "style")


# -- local edits --------------------------------------------------------------


def make_insertion_pair(spec: SceneSpec, index: int, video=None, masks=None) -> EditPair:
    """Source = scene with object ``index`` erased (background re-rendered)."""
    if not 0 <= index < len(spec.objects):
        raise PairError(f"object index {index} out of range")
    if video is None or masks is None:
        video, masks = render(spec)
    obj = spec.objects[index]
    mask = masks[index]
    if not mask.reshape(mask.shape[0], -1).any(axis=1).all():
        raise PairError(f"object {obj.describe()} is not visible in every frame")
    if mask.reshape(mask.shape[0], -1).mean(axis=1).max() > 0.5:
        raise PairError(f"object {obj.describe()} covers more than half the canvas")
    source, _ = render(spec.without(index))
    return EditPair(source, video, f"add a {obj.describe()} to the video", mask.copy(), "insert",
                    {"shape": obj.shape, "color": obj.color})


def make_removal_pair(spec: SceneSpec, seed: int, attempts: int = 100) -> EditPair:
    """Source = scene plus a composited extra object; target = the original."""
    rng = np.random.default_rng(seed)
    target, masks = render(spec)
    occupied0 = masks[:, 0].any(axis=0)
    used = {o.color for o in spec.objects}
    if len(used) == len(COLOR_NAMES):
        raise PairError("no free colour for an inserted object")
    for _ in range(attempts):
        obj = random_object(rng, spec.canvas, exclude_colors=used)
        (cy, cx), = trajectory(obj, spec.canvas, 1)
        fp0 = rasterize(obj.shape, obj.radius, cy, cx, spec.canvas)
        if fp0.any() and not (fp0 & occupied0).any():
            break
    else:
        raise PairError(f"no non-overlapping placement in {attempts} attempts")
    source, smasks = render(spec.with_object(obj))
    return EditPair(source, target, f"remove the {obj.describe()} from the video", smasks[-1].copy(),
                    "remove", {"shape": obj.shape, "color": obj.color})


def make_modify_pair(spec: SceneSpec, mode: str, seed: int = 0, index: int = 0) -> EditPair:
    rng = np.random.default_rng(seed)
    source, masks = render(spec)
    if mode == "subject":
        if not 0 <= index < len(spec.objects):
            raise PairError(f"object index {index} out of range")
        obj = spec.objects[index]
        free = [c for c in COLOR_NAMES if c not in {o.color for o in spec.objects}]
        if not free:
            raise PairError("no free colour to recolour the subject")
        new = free[rng.integers(len(free))]
        objs = list(spec.objects)
        objs[index] = replace(obj, color=new)
        target, _ = render(replace(spec, objects=tuple(objs)))
        return EditPair(source, target, f"change the {obj.describe()} to {new}", masks[index].copy(),
                        "modify_subject", {"shape": obj.shape, "color": new})
    if mode == "background":
        fg = masks.any(axis=0)
        coverage = fg.reshape(fg.shape[0], -1).mean(axis=1).max()
        if coverage >= 0.4:
            raise PairError(f"foreground covers {coverage:.0%} of the canvas; not separable")
        old_base = spec.background // len(PATTERNS)
        bases = [b for b in range(len(BASE_NAMES)) if b != old_base]
        new_bg = bases[rng.integers(len(bases))] * len(PATTERNS) + int(rng.integers(len(PATTERNS)))
        edited = replace(spec, background=new_bg)
        target, _ = render(edited)
        return EditPair(source, target, f"replace the background with a {edited.background_name()}",
                        ~fg, "modify_background")
    raise PairError(f"unknown modify mode {mode!r}")


# -- reference extraction and object diffing ----------------------------------


def extract_reference(pair: EditPair) -> np.ndarray:
    """Object pixels from its most visible frame, centred on a white canvas."""
    if pair.kind not in ("insert", "remove", "modify_subject"):
        raise PairError(f"no reference object for a {pair.kind} pair")
    counts = pair.edit_mask.reshape(pair.edit_mask.shape[0], -1).sum(axis=1)
    if counts.max() == 0:
        raise PairError("edited object is never visible")
    t = int(np.argmax(counts))
    m = pair.edit_mask[t]
    frame = pair.object_video[t]
    h, w = m.shape
    ys, xs = np.nonzero(m)
    dy = h // 2 - (ys.min() + ys.max() + 1) // 2
    dx = w // 2 - (xs.min() + xs.max() + 1) // 2
    ref = np.ones((h, w, 3), dtype=np.float32)
    ref[ys + dy, xs + dx] = frame[ys, xs]
    return ref


def reference_pixels(ref: np.ndarray) -> np.ndarray:
    return ref[(ref < 1.0).any(axis=-1)]


def _fill_ratio(m: np.ndarray) -> float:
    ys, xs = np.nonzero(m)
    box = (ys.max() - ys.min() + 1) * (xs.max() - xs.min() + 1)
    return float(m.sum()) / float(box)


def classify_shape(m: np.ndarray) -> str:
    r = _fill_ratio(m)
    if r > 0.9:
        return "square"
    if r < 0.68:
        return "triangle"
    return "disk"


def palette_color(pixels: np.ndarray) -> tuple[str | None, int]:
    """Most frequent palette colour among ``pixels`` and its count."""
    best, best_n = None, 0
    for name in COLOR_NAMES:
        n = int(np.all(pixels == np.asarray(PALETTE[name], np.float32), axis=-1).sum())
        if n > best_n:
            best, best_n = name, n
    return best, best_n


def diff_objects(source: np.ndarray, target: np.ndarray):
    """Recover the edit region by exact differencing.

    Returns ``(descriptor, mask)``; descriptor is None and the mask empty when
    the videos are identical.
    """
    source, target = np.asarray(source), np.asarray(target)
    if source.shape != target.shape:
        raise PairError(f"shape mismatch {source.shape} vs {target.shape}")
    mask = np.any(source != target, axis=-1)
    if not mask.any():
        return None, mask
    cands = []
    for side in (target, source):
        name, n = palette_color(side[mask])
        cands.append((n, name, side))
    n, name, side = max(cands, key=lambda c: c[0])
    if name is None:
        return {"shape": None, "color": None}, mask
    col = np.asarray(PALETTE[name], np.float32)
    obj = mask & np.all(side == col, axis=-1)
    t = int(np.argmax(obj.reshape(obj.shape[0], -1).sum(axis=1)))
    return {"shape": classify_shape(obj[t]), "color": name}, mask
