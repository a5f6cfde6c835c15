"""Task-aware dataset construction: manifest plus TOMN tensors for all five tasks."""

from __future__ import annotations

import hashlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import kvconfig, tensorio
from ..instruction import Instruction, ManifestRecord, TaskKind, VisualRef, write_manifest
from .pairs import (
    EDIT_KINDS, N_STYLES, PairError, extract_reference, make_insertion_pair, make_modify_pair,
    make_removal_pair, make_style_pair,
)
from .scene import describe_scene, random_scene, render
from .verify import verify_sample

log = logging.getLogger(__name__)

MAX_REJECT_RATE = 0.5


class DatasetError(RuntimeError):
    pass


@dataclass
class DatasetConfig:
    counts: dict = field(default_factory=lambda: {t: 4 for t in TaskKind})
    canvas: int = 64
    frames: int = 8
    objects: int = 2
    seed: int = 0

    @classmethod
    def from_mapping(cls, kv: dict) -> "DatasetConfig":
        cfg = cls(counts={})
        for k, v in kv.items():
            if k in TaskKind.__members__:
                cfg.counts[TaskKind(k)] = int(v)
            elif k in ("canvas", "frames", "objects", "seed"):
                setattr(cfg, k, int(v))
            else:
                raise DatasetError(f"unknown dataset config key {k!r}")
        if any(n < 0 for n in cfg.counts.values()):
            raise DatasetError("task counts must be non-negative")
        return cfg

    @classmethod
    def load(cls, path) -> "DatasetConfig":
        return cls.from_mapping(kvconfig.load(path))


@dataclass
class BuiltSample:
    record: ManifestRecord
    tensors: dict  # relative path -> array
    rejected: int = 0


def _sample_seed(seed: int, task: TaskKind, index: int, attempt: int) -> int:
    key = f"{seed}/{task.value}/{index}/{attempt}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def _edit_pair(kind: str, rng: np.random.Generator, cfg: DatasetConfig):
    spec = random_scene(rng, cfg.canvas, cfg.frames, cfg.objects)
    video, masks = render(spec)
    if kind == "style":
        return make_style_pair(video, int(rng.integers(1, N_STYLES)))
    if kind == "insert":
        return make_insertion_pair(spec, int(rng.integers(len(spec.objects))), video, masks)
    if kind == "remove":
        return make_removal_pair(spec, int(rng.integers(2**31)))
    if kind == "modify_subject":
        return make_modify_pair(spec, "subject", int(rng.integers(2**31)), int(rng.integers(len(spec.objects))))
    return make_modify_pair(spec, "background", int(rng.integers(2**31)))


def build_one(task: TaskKind, index: int, cfg: DatasetConfig, max_attempts: int = 20) -> BuiltSample:
    """One verified sample; deterministic in (cfg.seed, task, index)."""
    name = f"{task.value.lower()}_{index:04d}"
    rejected = 0
    for attempt in range(max_attempts):
        rng = np.random.default_rng(_sample_seed(cfg.seed, task, index, attempt))
        tensors = {}
        mask = None
        extra = {"id": name}
        if task in (TaskKind.T2V, TaskKind.I2V, TaskKind.FLF2V):
            spec = random_scene(rng, cfg.canvas, cfg.frames, cfg.objects)
            target, _ = render(spec)
            text = describe_scene(spec)
            refs = []
            if task is TaskKind.I2V:
                refs = [("first_frame", target[0])]
                text = "animate this frame: " + text
            elif task is TaskKind.FLF2V:
                refs = [("first_frame", target[0]), ("last_frame", target[-1])]
                text = "connect the first and last frames: " + text
        else:
            if task is TaskKind.InContextEdit:
                kind = EDIT_KINDS[index % len(EDIT_KINDS)]
            else:
                kind = ("insert", "remove")[index % 2]
            try:
                pair = _edit_pair(kind, rng, cfg)
                reference = extract_reference(pair) if task is TaskKind.InContextGen else None
            except PairError as exc:
                log.debug("%s attempt %d: %s", name, attempt, exc)
                rejected += 1
                continue
            verdict = verify_sample(pair, reference)
            if not verdict.accepted:
                log.debug("%s attempt %d rejected: %s", name, attempt, verdict.reasons)
                rejected += 1
                continue
            target, mask, text = pair.target, pair.edit_mask, pair.instruction
            extra["edit"] = pair.kind
            refs = [("video", pair.source)]
            if reference is not None:
                refs.insert(0, ("image", reference))
                text = f"{text}, using the object in the image"
        vrefs = []
        for k, (kind_, arr) in enumerate(refs):
            rel = f"tensors/{name}_ref{k}_{kind_}.tomn"
            tensors[rel] = arr
            vrefs.append(VisualRef(kind_, rel))
        target_rel = f"tensors/{name}_target.tomn"
        tensors[target_rel] = target
        mask_rel = None
        if mask is not None:
            mask_rel = f"tensors/{name}_mask.tomn"
            tensors[mask_rel] = mask
        rec = ManifestRecord(Instruction(text, tuple(vrefs)), target_rel, mask_rel, extra)
        return BuiltSample(rec, tensors, rejected)
    raise DatasetError(f"{name}: no valid sample after {max_attempts} attempts")


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("OMNIVID_THREADS", "1")))
    except ValueError:
        return 1


def build_dataset(cfg: DatasetConfig, out_dir, seed: int | None = None) -> Path:
    """Write ``manifest.jsonl`` and ``tensors/`` under ``out_dir``.

    Samples are independent, so they are built in parallel and merged back in
    (task, index) order; output bytes do not depend on the worker count.
    """
    if seed is not None:
        cfg = DatasetConfig(dict(cfg.counts), cfg.canvas, cfg.frames, cfg.objects, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(TaskKind(t), i) for t in TaskKind for i in range(cfg.counts.get(t, 0))]
    with ThreadPoolExecutor(_workers()) as ex:
        built = list(ex.map(lambda j: build_one(j[0], j[1], cfg), jobs))
    editing = [b for (t, _), b in zip(jobs, built) if t in (TaskKind.InContextEdit, TaskKind.InContextGen)]
    tries = sum(b.rejected + 1 for b in editing)
    rejected = sum(b.rejected for b in editing)
    if tries and rejected / tries > MAX_REJECT_RATE:
        raise DatasetError(f"verification rejected {rejected}/{tries} candidate pairs; generator bug?")
    for b in built:
        for rel, arr in b.tensors.items():
            tensorio.save(out / rel, arr)
    write_manifest(out / "manifest.jsonl", [b.record for b in built])
    log.info("wrote %d samples to %s (%d rejected candidates)", len(built), out, rejected)
    return out / "manifest.jsonl"


def dataset_digest(root) -> str:
    """sha256 over the manifest and every tensor file, in sorted path order."""
    root = Path(root)
    h = hashlib.sha256()
    files = [root / "manifest.jsonl"] + sorted((root / "tensors").glob("*.tomn"))
    for p in files:
        h.update(p.relative_to(root).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()
