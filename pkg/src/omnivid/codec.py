"""Lossless latent codec: space-to-depth patching plus temporal alignment.

Stands in for a pretrained video VAE. There are no parameters, so the codec
is frozen by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensorio

PATCH = 4

ROLES = ("target", "condition_video", "reference_image", "first_frame", "last_frame")
PLACEMENTS = ("front", "back", "front_and_back")


class CodecError(ValueError):
    pass


@dataclass(frozen=True)
class LatentGrid:
    values: np.ndarray  # (f_l, h_l, w_l, c_l) float32
    role: str
    validity: np.ndarray = field(default=None)  # (f_l,) bool

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 4:
            raise CodecError(f"latent must be rank 4, got shape {values.shape}")
        if self.role not in ROLES:
            raise CodecError(f"unknown role {self.role!r}")
        validity = self.validity
        if validity is None:
            validity = np.ones(values.shape[0], dtype=bool)
        validity = np.asarray(validity, dtype=bool)
        if validity.shape != (values.shape[0],):
            raise CodecError(
                f"validity length {validity.shape} does not match {values.shape[0]} frames"
            )
        values.setflags(write=False)
        validity.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "validity", validity)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.values.shape

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    def with_role(self, role: str) -> "LatentGrid":
        return LatentGrid(self.values, role, self.validity)


def encode(video, patch: int = PATCH, role: str = "target") -> LatentGrid:
    """Space-to-depth: (F, H, W, 3) -> (F, H/P, W/P, 3*P*P).

    A bare image (H, W, 3) is treated as a single frame.
    """
    v = np.asarray(video, dtype=np.float32)
    if v.ndim == 3:
        v = v[None]
    if v.ndim != 4 or v.shape[-1] != 3:
        raise CodecError(f"video must be (frames, height, width, 3), got {v.shape}")
    f, h, w, c = v.shape
    if f < 1:
        raise CodecError("video has no frames")
    for name, size in (("height", h), ("width", w)):
        if size % patch:
            raise CodecError(f"{name} {size} is not divisible by patch size {patch}")
    z = v.reshape(f, h // patch, patch, w // patch, patch, c)
    z = z.transpose(0, 1, 3, 2, 4, 5).reshape(f, h // patch, w // patch, patch * patch * c)
    return LatentGrid(np.ascontiguousarray(z), role)


def decode(latent, patch: int = PATCH) -> np.ndarray:
    z = latent.values if isinstance(latent, LatentGrid) else np.asarray(latent, np.float32)
    if z.ndim != 4:
        raise CodecError(f"latent must be rank 4, got shape {z.shape}")
    f, hl, wl, cl = z.shape
    if cl != 3 * patch * patch:
        raise CodecError(f"latent has {cl} channels, codec expects {3 * patch * patch}")
    v = z.reshape(f, hl, wl, patch, patch, 3).transpose(0, 1, 3, 2, 4, 5)
    return np.ascontiguousarray(v.reshape(f, hl * patch, wl * patch, 3))


def unify_temporal_shape(grid: LatentGrid, f_target: int, placement: str = "front") -> LatentGrid:
    """Zero-pad a short latent to ``f_target`` frames and mark padding invalid."""
    if placement not in PLACEMENTS:
        raise CodecError(f"unknown placement {placement!r}")
    f = grid.frames
    if f > f_target:
        raise CodecError(f"grid has {f} frames, more than f_target={f_target}")
    if placement == "front_and_back" and f != 2:
        raise CodecError("front_and_back expects exactly 2 frames (first, last)")
    out = np.zeros((f_target,) + grid.shape[1:], dtype=np.float32)
    valid = np.zeros(f_target, dtype=bool)
    if placement == "front":
        idx = np.arange(f)
    elif placement == "back":
        idx = np.arange(f_target - f, f_target)
    else:
        idx = np.array([0, f_target - 1])
        if f_target < 2:
            raise CodecError("front_and_back needs f_target >= 2")
    out[idx] = grid.values
    valid[idx] = grid.validity
    return LatentGrid(out, grid.role, valid)


def concat_conditions(conditions) -> tuple[LatentGrid, list[tuple[int, int, str]]]:
    """Concatenate grids along time.

    Returns the joined grid and ``(start, stop, role)`` per source. The joined
    grid takes the role of the first source; per-frame roles live in the
    segment list.
    """
    conditions = list(conditions)
    if not conditions:
        raise CodecError("no conditions to concatenate")
    ref = conditions[0].shape[1:]
    segments = []
    start = 0
    for g in conditions:
        if g.shape[1:] != ref:
            raise CodecError(f"grid shape {g.shape[1:]} does not match {ref}")
        segments.append((start, start + g.frames, g.role))
        start += g.frames
    values = np.concatenate([g.values for g in conditions], axis=0)
    validity = np.concatenate([g.validity for g in conditions])
    return LatentGrid(values, conditions[0].role, validity), segments


def save_latent(path, grid: LatentGrid) -> None:
    path = Path(path)
    tensorio.save(path, grid.values)
    tensorio.save(path.with_name(path.stem + ".valid.tomn"), grid.validity)


def load_latent(path, role: str) -> LatentGrid:
    path = Path(path)
    values = tensorio.load(path)
    validity = tensorio.load_mask(path.with_name(path.stem + ".valid.tomn"))
    return LatentGrid(values, role, validity)
