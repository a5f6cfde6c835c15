"""Unified multimodal instruction, task inference and the JSONL manifest."""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import tensorio


class TaskKind(str, enum.Enum):
    T2V = "T2V"
    I2V = "I2V"
    FLF2V = "FLF2V"
    InContextGen = "InContextGen"
    InContextEdit = "InContextEdit"


REF_KINDS = ("image", "video", "first_frame", "last_frame")


class InstructionError(ValueError):
    pass


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class VisualRef:
    kind: str
    path: str | None = None
    tensor: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in REF_KINDS:
            raise InstructionError(f"unknown ref kind {self.kind!r}")

    def resolve(self, root=None) -> np.ndarray:
        if self.tensor is not None:
            return np.asarray(self.tensor, dtype=np.float32)
        if self.path is None:
            raise InstructionError(f"{self.kind} ref has neither path nor tensor")
        p = Path(self.path) if root is None else Path(root) / self.path
        return tensorio.load(p)


@dataclass(frozen=True)
class Instruction:
    text: str
    refs: tuple[VisualRef, ...] = ()
    task: TaskKind | None = None  # explicit override, see infer_task

    def __post_init__(self):
        object.__setattr__(self, "refs", tuple(self.refs))
        if self.task is not None:
            object.__setattr__(self, "task", TaskKind(self.task))

    def kinds(self) -> list[str]:
        return [r.kind for r in self.refs]


def validate(instr: Instruction) -> list[str]:
    """Every violated invariant; empty when the instruction is well formed."""
    problems = []
    if not instr.text or not instr.text.strip():
        problems.append("text empty")
    counts = Counter(instr.kinds())
    if counts["first_frame"] > 1:
        problems.append("more than one first_frame")
    if counts["last_frame"] > 1:
        problems.append("more than one last_frame")
    if counts["last_frame"] and not counts["first_frame"]:
        problems.append("last_frame without first_frame")
    for i, r in enumerate(instr.refs):
        if r.path is None and r.tensor is None:
            problems.append(f"ref {i} ({r.kind}) has no payload")
    return problems


# (image, video, first_frame, last_frame) counts -> task
_TASK_TABLE = {
    (0, 0, 0, 0): TaskKind.T2V,
    (0, 0, 1, 0): TaskKind.I2V,
    (1, 0, 0, 0): TaskKind.I2V,
    (0, 0, 1, 1): TaskKind.FLF2V,
    (0, 1, 0, 0): TaskKind.InContextEdit,
    (1, 1, 0, 0): TaskKind.InContextGen,
}

# ref-kind signatures a task override may claim
_OVERRIDE_OK = {
    TaskKind.InContextEdit: {(1, 1, 0, 0), (0, 1, 0, 0)},
    TaskKind.InContextGen: {(1, 1, 0, 0)},
}


def _signature(instr: Instruction) -> tuple[int, int, int, int]:
    c = Counter(instr.kinds())
    return tuple(c[k] for k in REF_KINDS)


def infer_task(instr: Instruction) -> TaskKind:
    """Structural task inference from the multiset of ref kinds.

    The payloads are never inspected. An explicit ``task`` override is honoured
    only where the structure is ambiguous (image + video).
    """
    problems = validate(instr)
    if problems:
        raise InstructionError("invalid instruction: " + "; ".join(problems))
    sig = _signature(instr)
    if instr.task is not None:
        if sig in _OVERRIDE_OK.get(instr.task, set()) or _TASK_TABLE.get(sig) == instr.task:
            return instr.task
        raise InstructionError(f"task override {instr.task.value} incompatible with refs {_describe(sig)}")
    try:
        return _TASK_TABLE[sig]
    except KeyError:
        raise InstructionError(f"no task for ref combination {_describe(sig)}") from None


def _describe(sig) -> str:
    parts = [f"{n}x{k}" for n, k in zip(sig, REF_KINDS) if n]
    return "+".join(parts) or "none"


# -- manifest ---------------------------------------------------------------


@dataclass(frozen=True)
class ManifestRecord:
    instruction: Instruction
    target_path: str | None = None
    mask_path: str | None = None
    extra: dict = field(default_factory=dict, compare=False)


def to_record_dict(rec: ManifestRecord) -> dict:
    instr = rec.instruction
    problems = validate(instr)
    if problems:
        raise ManifestError("cannot serialize invalid instruction: " + "; ".join(problems))
    refs = []
    for r in instr.refs:
        if r.path is None:
            raise ManifestError(f"{r.kind} ref has no path; write its tensor first")
        refs.append({"kind": r.kind, "path": r.path})
    d: dict[str, Any] = {"text": instr.text, "refs": refs}
    if instr.task is not None:
        d["task"] = instr.task.value
    if rec.target_path is not None:
        d["target_path"] = rec.target_path
    if rec.mask_path is not None:
        d["mask_path"] = rec.mask_path
    d.update(rec.extra)
    return d


def serialize(rec) -> str:
    if isinstance(rec, Instruction):
        rec = ManifestRecord(rec)
    return json.dumps(to_record_dict(rec), ensure_ascii=False, separators=(",", ":"))


def deserialize(line: str, lineno: int = 1) -> ManifestRecord:
    try:
        d = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"line {lineno}: malformed JSON ({exc.msg})") from None
    if not isinstance(d, dict) or "text" not in d or not isinstance(d.get("refs", []), list):
        raise ManifestError(f"line {lineno}: expected object with 'text' and 'refs'")
    try:
        refs = tuple(VisualRef(r["kind"], r["path"]) for r in d.get("refs", []))
        instr = Instruction(d["text"], refs, d.get("task"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"line {lineno}: {exc}") from None
    known = {"text", "refs", "task", "target_path", "mask_path"}
    extra = {k: v for k, v in d.items() if k not in known}
    return ManifestRecord(instr, d.get("target_path"), d.get("mask_path"), extra)


def read_manifest(path) -> list[ManifestRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, 1):
            if line.strip():
                records.append(deserialize(line, i))
    return records


def write_manifest(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(serialize(rec) + "\n")


# -- paired samples -----------------------------------------------------------


@dataclass(frozen=True)
class TaskSample:
    instruction: Instruction
    task: TaskKind
    conditions: tuple  # LatentGrid, in instruction ref order
    target: Any  # LatentGrid with role "target"
    edit_mask: np.ndarray | None = None  # (F, H, W) bool in pixel space
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "conditions", tuple(self.conditions))
        if self.target.role != "target":
            raise InstructionError(f"target grid has role {self.target.role!r}")
        editing = self.task in (TaskKind.InContextEdit, TaskKind.InContextGen)
        if self.edit_mask is not None:
            if not editing:
                raise InstructionError(f"{self.task.value} sample cannot carry an edit mask")
            from .codec import PATCH

            f, hl, wl, _ = self.target.shape
            expect = (f, hl * PATCH, wl * PATCH)
            if tuple(self.edit_mask.shape) != expect:
                raise InstructionError(
                    f"edit mask shape {self.edit_mask.shape} does not match target {expect}"
                )
        elif self.task is TaskKind.InContextEdit:
            raise InstructionError("InContextEdit sample requires an edit mask")


def build_conditions(task: TaskKind, refs, arrays, f_target: int) -> list:
    """Encode resolved ref tensors into role-tagged, temporally aligned grids."""
    from .codec import encode, unify_temporal_shape

    grids = []
    for ref, arr in zip(refs, arrays):
        if ref.kind == "video":
            g = encode(arr, role="condition_video")
            if g.frames < f_target:
                g = unify_temporal_shape(g, f_target, "front")
        elif task in (TaskKind.I2V,) or ref.kind == "first_frame":
            g = unify_temporal_shape(encode(arr, role="first_frame"), f_target, "front")
        elif ref.kind == "last_frame":
            g = unify_temporal_shape(encode(arr, role="last_frame"), f_target, "back")
        else:
            g = encode(arr, role="reference_image")
        grids.append(g)
    return grids


def load_sample(rec: ManifestRecord, root) -> TaskSample:
    """Resolve a manifest record's tensors into a TaskSample."""
    from .codec import encode

    instr = rec.instruction
    task = infer_task(instr)
    if rec.target_path is None:
        raise ManifestError("record has no target_path")
    target = encode(tensorio.load(Path(root) / rec.target_path), role="target")
    arrays = [r.resolve(root) for r in instr.refs]
    conds = build_conditions(task, instr.refs, arrays, target.frames)
    mask = None
    if rec.mask_path is not None:
        mask = tensorio.load_mask(Path(root) / rec.mask_path)
    return TaskSample(instr, task, conds, target, mask, rec.extra.get("id", ""))
