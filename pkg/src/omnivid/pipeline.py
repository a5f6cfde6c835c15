"""Generation and evaluation over manifest samples."""

from __future__ import annotations

import numpy as np

from . import metrics
from .codec import decode
from .dit import OmniModel, Prepared, sample
from .instruction import TaskKind


def generate_video(model: OmniModel, prep: Prepared, steps: int = 16, seed: int = 0,
                   guidance: float = 1.0, clip: bool = True) -> np.ndarray:
    video = decode(sample(model, prep, steps=steps, seed=seed, guidance=guidance))
    return np.clip(video, 0.0, 1.0) if clip else video


def _ref_arrays(prep: Prepared, root) -> dict:
    instr = prep.sample.instruction
    return {r.kind: r.resolve(root) for r in instr.refs}


def evaluate_sample(model: OmniModel, prep: Prepared, root, steps: int = 16, seed: int = 0,
                    guidance: float = 1.0, video: np.ndarray | None = None, edit_kind: str | None = None) -> dict:
    """One report row. Metrics that do not apply to the task are None.

    ``identity_score`` is only computed for insertions, where the target is
    expected to show the reference object.
    """
    s = prep.sample
    if video is None:
        video = generate_video(model, prep, steps, seed, guidance)
    target = decode(s.target)
    err = metrics.mse(video, target)
    row = {
        "sample": s.name or "?",
        "task": s.task.value,
        "recon_mse": err,
        "psnr": metrics.psnr(video, target),
    }
    refs = _ref_arrays(prep, root)
    if s.task is TaskKind.FLF2V:
        row["boundary_first"], row["boundary_last"] = metrics.boundary_frame_error(
            video, refs["first_frame"], refs["last_frame"]
        )
    if s.edit_mask is not None and "video" in refs and (~s.edit_mask).any():
        row["preservation_error"] = metrics.preservation_error(refs["video"], video, s.edit_mask)
    if edit_kind == "insert" and "image" in refs and s.edit_mask.any():
        row["identity_score"] = metrics.identity_score(refs["image"], video, s.edit_mask)
    return row
