"""PPM frame dumps for eyeballing generated videos."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def to_uint8(frame: np.ndarray) -> np.ndarray:
    return np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path, frame: np.ndarray) -> Path:
    """Binary P6 file from an (H, W, 3) array in [0, 1]."""
    img = to_uint8(np.asarray(frame))
    if img.ndim != 3 or img.shape[-1] != 3:
        raise ValueError(f"expected (H, W, 3), got {img.shape}")
    h, w, _ = img.shape
    path = Path(path)
    path.write_bytes(f"P6\n{w} {h}\n255\n".encode() + img.tobytes())
    return path


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, dims, maxval, rest = data.split(b"\n", 3)
    if magic != b"P6" or maxval != b"255":
        raise ValueError(f"{path}: not an 8-bit binary PPM")
    w, h = map(int, dims.split())
    return np.frombuffer(rest, np.uint8).reshape(h, w, 3)


def write_ppm_sequence(out_dir, video: np.ndarray, prefix: str = "frame") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [write_ppm(out / f"{prefix}_{i:03d}.ppm", f) for i, f in enumerate(video)]
