"""3D rotary position embedding and the per-task positional offset policy.

Positions are ``(t, h, w)`` triples on the latent grid. Condition tokens are
separated from the target by a constant offset added before rotation:

* target tokens                      -> (0, 0, 0)
* condition video (in-context tasks) -> shifted along width by the target width
* reference image (in-context tasks) -> shifted along time by target frames + 1
* first/last frame, I2V image        -> (0, 0, 0); the grid itself is already
  aligned to the target frames it constrains
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch

from .instruction import TaskKind


class Position3(NamedTuple):
    t: int
    h: int
    w: int


class Offset3(NamedTuple):
    dt: int = 0
    dh: int = 0
    dw: int = 0


ZERO = Offset3(0, 0, 0)


class RopeError(ValueError):
    pass


@dataclass(frozen=True)
class RopeConfig:
    head_dim: int = 32
    split: tuple[int, int, int] = (4, 6, 6)  # frequency pairs for (t, h, w)
    base: float = 10000.0

    def __post_init__(self):
        if self.head_dim % 2:
            raise RopeError(f"head_dim must be even, got {self.head_dim}")
        if sum(self.split) != self.head_dim // 2:
            raise RopeError(f"split {self.split} must sum to head_dim/2 = {self.head_dim // 2}")
        if min(self.split) < 0 or self.base <= 0:
            raise RopeError("split entries must be non-negative and base positive")

    def frequencies(self) -> np.ndarray:
        """Concatenated per-axis frequency vectors, length head_dim/2."""
        parts = []
        for n in self.split:
            i = np.arange(n, dtype=np.float64)
            parts.append(self.base ** (-2.0 * i / (2 * n)) if n else np.zeros(0))
        return np.concatenate(parts)


def build_position_grid(f_l: int, h_l: int, w_l: int, offset=ZERO) -> list[Position3]:
    if min(f_l, h_l, w_l) < 1:
        raise RopeError(f"extents must be >= 1, got {(f_l, h_l, w_l)}")
    dt, dh, dw = offset
    return [
        Position3(t + dt, h + dh, w + dw)
        for t in range(f_l)
        for h in range(h_l)
        for w in range(w_l)
    ]


def position_array(f_l: int, h_l: int, w_l: int, offset=ZERO) -> np.ndarray:
    """Vectorised ``build_position_grid``: (f*h*w, 3) int64, same order."""
    t, h, w = np.meshgrid(np.arange(f_l), np.arange(h_l), np.arange(w_l), indexing="ij")
    pos = np.stack([t.ravel(), h.ravel(), w.ravel()], axis=1).astype(np.int64)
    return pos + np.asarray(offset, dtype=np.int64)


def angles(pos, cfg: RopeConfig) -> np.ndarray:
    """Rotation angles for one position or an (N, 3) array of positions."""
    p = np.asarray(pos, dtype=np.float64)
    freqs = cfg.frequencies()
    axis = np.repeat(np.arange(3), cfg.split)
    return p[..., axis] * freqs


def apply_rope(vec, angle_seq) -> np.ndarray:
    """Rotate consecutive pairs ``(x[2i], x[2i+1])`` by ``angle_seq[i]``."""
    v = np.asarray(vec, dtype=np.float64)
    a = np.asarray(angle_seq, dtype=np.float64)
    if v.shape[-1] != 2 * a.shape[-1]:
        raise RopeError(f"vector length {v.shape[-1]} != 2 * {a.shape[-1]} angles")
    x, y = v[..., 0::2], v[..., 1::2]
    c, s = np.cos(a), np.sin(a)
    out = np.empty_like(v)
    out[..., 0::2] = x * c - y * s
    out[..., 1::2] = x * s + y * c
    return out


def rope_tables(ang, dtype=torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
    a = torch.as_tensor(np.asarray(ang), dtype=torch.float64)
    return torch.cos(a).to(dtype), torch.sin(a).to(dtype)


def apply_rope_torch(x: torch.Tensor, cos: torch.Tensor, sin: torch.Tensor) -> torch.Tensor:
    """x: (..., N, head_dim); cos/sin: (N, head_dim/2)."""
    x1, x2 = x[..., 0::2], x[..., 1::2]
    r1 = x1 * cos - x2 * sin
    r2 = x1 * sin + x2 * cos
    return torch.stack((r1, r2), dim=-1).flatten(-2)


# (task, role) pairs the policy knows about
_POLICY = {
    (TaskKind.I2V, "first_frame"): "anchor",
    (TaskKind.FLF2V, "first_frame"): "anchor",
    (TaskKind.FLF2V, "last_frame"): "anchor",
    (TaskKind.InContextGen, "condition_video"): "width",
    (TaskKind.InContextGen, "reference_image"): "time",
    (TaskKind.InContextEdit, "condition_video"): "width",
    (TaskKind.InContextEdit, "reference_image"): "time",
}


def offset_policy(task, role: str, target_shape) -> Offset3:
    """Offset for a grid with ``role`` under ``task``.

    ``target_shape`` is the target latent's ``(f, h, w)``.
    """
    task = TaskKind(task)
    f_tar, _, w_tar = (int(x) for x in target_shape[:3])
    if role == "target":
        return ZERO
    kind = _POLICY.get((task, role))
    if kind is None:
        raise RopeError(f"no offset policy for role {role!r} under {task.value}")
    if kind == "width":
        return Offset3(0, 0, w_tar)
    if kind == "time":
        return Offset3(f_tar + 1, 0, 0)
    return ZERO


def policy_table() -> list[tuple[TaskKind, str]]:
    return [(TaskKind(t), "target") for t in TaskKind] + list(_POLICY)
