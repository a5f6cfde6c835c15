"""Procedural moving-shape scenes with exact per-object visibility masks."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

SHAPES = ("disk", "square", "triangle")

# saturated object colours; each has a channel <= 0.1 or >= 0.9, so none can
# coincide with a background pixel (all background channels lie in [0.3, 0.7])
PALETTE = {
    "red": (0.9, 0.1, 0.1),
    "green": (0.1, 0.8, 0.1),
    "blue": (0.1, 0.2, 0.9),
    "yellow": (0.95, 0.9, 0.1),
    "cyan": (0.1, 0.85, 0.9),
    "magenta": (0.9, 0.1, 0.85),
    "orange": (1.0, 0.55, 0.0),
    "purple": (0.5, 0.0, 0.8),
}
COLOR_NAMES = tuple(PALETTE)

BACKGROUND_BASES = {
    "gray": (0.5, 0.5, 0.5),
    "sand": (0.6, 0.55, 0.4),
    "slate": (0.35, 0.4, 0.5),
    "olive": (0.45, 0.5, 0.3),
    "rose": (0.6, 0.4, 0.45),
    "teal": (0.3, 0.5, 0.5),
}
BASE_NAMES = tuple(BACKGROUND_BASES)
PATTERNS = ("plain", "horizontal gradient", "vertical gradient", "diagonal gradient")
PATTERN_AMPLITUDE = 0.06
N_BACKGROUNDS = len(BASE_NAMES) * len(PATTERNS)


@dataclass(frozen=True)
class SceneObject:
    shape: str
    color: str
    radius: float  # half extent in pixels
    position: tuple[float, float]  # (y, x) centre at frame 0
    velocity: tuple[float, float]  # pixels per frame

    def describe(self) -> str:
        return f"{self.color} {self.shape}"


@dataclass(frozen=True)
class SceneSpec:
    canvas: int = 64
    frames: int = 8
    background: int = 0
    objects: tuple[SceneObject, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if not 0 <= self.background < N_BACKGROUNDS:
            raise ValueError(f"background id {self.background} out of range")
        for o in self.objects:
            if o.shape not in SHAPES or o.color not in PALETTE:
                raise ValueError(f"bad object {o}")
            if 2 * o.radius > self.canvas:
                raise ValueError(f"object {o.describe()} larger than canvas")

    def without(self, index: int) -> "SceneSpec":
        return replace(self, objects=self.objects[:index] + self.objects[index + 1 :])

    def with_object(self, obj: SceneObject) -> "SceneSpec":
        return replace(self, objects=self.objects + (obj,))

    def background_name(self) -> str:
        base, pat = divmod(self.background, len(PATTERNS))
        return f"{BASE_NAMES[base]} {PATTERNS[pat]}"


def _bounce(p0: float, v: float, lo: float, hi: float, n: int) -> np.ndarray:
    """Positions over n frames, reflected into [lo, hi]."""
    span = hi - lo
    raw = p0 - lo + v * np.arange(n)
    if span <= 0:
        return np.full(n, lo)
    m = np.mod(raw, 2 * span)
    return lo + np.where(m > span, 2 * span - m, m)


def trajectory(obj: SceneObject, canvas: int, frames: int) -> np.ndarray:
    """(frames, 2) centre positions, kept fully inside the canvas."""
    r = obj.radius
    ys = _bounce(obj.position[0], obj.velocity[0], r, canvas - r, frames)
    xs = _bounce(obj.position[1], obj.velocity[1], r, canvas - r, frames)
    return np.stack([ys, xs], axis=1)


def rasterize(shape: str, radius: float, cy: float, cx: float, canvas: int) -> np.ndarray:
    yy, xx = np.mgrid[0:canvas, 0:canvas] + 0.5
    dy, dx = yy - cy, xx - cx
    if shape == "disk":
        return dy * dy + dx * dx <= radius * radius
    if shape == "square":
        return (np.abs(dy) <= radius) & (np.abs(dx) <= radius)
    if shape == "triangle":
        # apex up, base at cy + radius
        frac = (dy + radius) / (2 * radius)
        return (dy >= -radius) & (dy <= radius) & (np.abs(dx) <= radius * frac)
    raise ValueError(f"unknown shape {shape!r}")


def render_background(background: int, canvas: int) -> np.ndarray:
    base, pat = divmod(background, len(PATTERNS))
    color = np.asarray(BACKGROUND_BASES[BASE_NAMES[base]], dtype=np.float64)
    u = (np.arange(canvas) + 0.5) / canvas
    if pat == 0:
        ramp = np.zeros((canvas, canvas))
    elif pat == 1:
        ramp = np.broadcast_to(u[None, :], (canvas, canvas))
    elif pat == 2:
        ramp = np.broadcast_to(u[:, None], (canvas, canvas))
    else:
        ramp = (u[:, None] + u[None, :]) / 2
    return (color + PATTERN_AMPLITUDE * ramp[..., None]).astype(np.float32)


def render(spec: SceneSpec, seed: int | None = None):
    """Render a scene.

    Returns ``(video, masks)``: video is (F, H, W, 3) float32 in [0, 1] and
    masks is (n_objects, F, H, W) bool holding each object's *visible* pixels
    (later objects are drawn on top). The scene is fully determined by
    ``spec``; ``seed`` is accepted for interface symmetry and has no effect.
    """
    n, f, c = len(spec.objects), spec.frames, spec.canvas
    bg = render_background(spec.background, c)
    video = np.broadcast_to(bg, (f, c, c, 3)).copy()
    masks = np.zeros((n, f, c, c), dtype=bool)
    for i, obj in enumerate(spec.objects):
        col = np.asarray(PALETTE[obj.color], dtype=np.float32)
        for t, (cy, cx) in enumerate(trajectory(obj, c, f)):
            m = rasterize(obj.shape, obj.radius, cy, cx, c)
            masks[:i, t] &= ~m
            masks[i, t] = m
            video[t][m] = col
    return video, masks


def footprints(spec: SceneSpec) -> np.ndarray:
    """Unoccluded per-object masks, (n_objects, F, H, W)."""
    out = np.zeros((len(spec.objects), spec.frames, spec.canvas, spec.canvas), dtype=bool)
    for i, obj in enumerate(spec.objects):
        for t, (cy, cx) in enumerate(trajectory(obj, spec.canvas, spec.frames)):
            out[i, t] = rasterize(obj.shape, obj.radius, cy, cx, spec.canvas)
    return out


def random_object(rng: np.random.Generator, canvas: int, color: str | None = None,
                  exclude_colors=()) -> SceneObject:
    choices = [c for c in COLOR_NAMES if c not in exclude_colors]
    if color is None:
        color = choices[rng.integers(len(choices))]
    shape = SHAPES[rng.integers(len(SHAPES))]
    radius = float(rng.uniform(canvas / 8, canvas / 5))
    y = float(rng.uniform(radius, canvas - radius))
    x = float(rng.uniform(radius, canvas - radius))
    speed = canvas / 16
    vy, vx = (float(v) for v in rng.uniform(-speed, speed, size=2))
    return SceneObject(shape, color, radius, (y, x), (vy, vx))


def random_scene(rng: np.random.Generator, canvas: int = 64, frames: int = 8,
                 n_objects: int = 2) -> SceneSpec:
    """Scene with distinct object colours."""
    colors = rng.permutation(len(COLOR_NAMES))[:n_objects]
    objs = [random_object(rng, canvas, COLOR_NAMES[i]) for i in colors]
    return SceneSpec(canvas, frames, int(rng.integers(N_BACKGROUNDS)), tuple(objs))


def describe_scene(spec: SceneSpec) -> str:
    names = [o.describe() for o in spec.objects]
    if not names:
        subject = "an empty scene"
    elif len(names) == 1:
        subject = f"a {names[0]}"
    else:
        subject = ", ".join(f"a {n}" for n in names[:-1]) + f" and a {names[-1]}"
    return f"{subject} moving over a {spec.background_name()} background"
