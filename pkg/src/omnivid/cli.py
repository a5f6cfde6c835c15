"""Command-line entry point: ``omnivid <subcommand> [flags]``.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print one
line ``error: <kind>: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from pathlib import Path

import torch

from . import kvconfig, tensorio
from .datagen import DatasetConfig, build_dataset, dataset_digest
from .dit import ModelConfig
from .export import write_ppm_sequence
from .instruction import TaskKind, infer_task, load_sample, read_manifest
from .metrics import emit_report
from .pipeline import evaluate_sample, generate_video
from .trainer import (
    StagePlan, Telemetry, TrainState, group_by_task, group_digest, load_checkpoint, read_meta,
    save_checkpoint, train,
)

log = logging.getLogger("omnivid")


class UsageError(Exception):
    pass


def _threads() -> None:
    raw = os.environ.get("OMNIVID_THREADS")
    if raw is None:
        return
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"OMNIVID_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("OMNIVID_THREADS must be >= 1")
    torch.set_num_threads(n)


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required for {args.cmd}")


def _records(manifest):
    path = Path(manifest)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    return path.parent, read_manifest(path)


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def cmd_datagen(args) -> int:
    _require(args, "out")
    cfg = DatasetConfig.load(args.config) if args.config else DatasetConfig()
    build_dataset(cfg, args.out, seed=args.seed)
    print(f"manifest={Path(args.out) / 'manifest.jsonl'}")
    print(f"digest={dataset_digest(args.out)}")
    return 0


def cmd_train(args) -> int:
    _require(args, "manifest", "out", "stage")
    root, recs = _records(args.manifest)
    if args.checkpoint:
        state = load_checkpoint(args.checkpoint)
    else:
        first = load_sample(recs[0], root)
        cfg = ModelConfig(latent_shape=tuple(first.target.shape))
        state = TrainState.fresh(cfg, seed=args.seed if args.seed is not None else 0)
    kv = kvconfig.load(args.config) if args.config else {}
    if "stage" in kv and int(kv["stage"]) != args.stage:
        raise UsageError(f"--stage {args.stage} contradicts stage={kv['stage']} in {args.config}")
    kv["stage"] = args.stage
    if args.steps is not None:
        kv["steps"] = args.steps
    if args.seed is not None:
        kv["seed"] = args.seed
    plan = StagePlan.from_mapping(kv)
    preps = [state.model.prepare(load_sample(r, root)) for r in recs]
    dataset = group_by_task(preps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    telemetry = Telemetry(out / "telemetry.csv")
    try:
        losses = train(state, plan, dataset, telemetry)
    finally:
        telemetry.close()
    save_checkpoint(out, state)
    if losses:
        print(f"final_loss={losses[-1]:.6f}")
    print(f"stage={state.stage} step={state.step} checkpoint={out}")
    return 0


def _generate(args, tasks) -> int:
    _require(args, "checkpoint", "manifest", "out")
    state = load_checkpoint(args.checkpoint)
    root, recs = _records(args.manifest)
    out = Path(args.out)
    n = 0
    for rec in recs:
        s = load_sample(rec, root)
        if s.task not in tasks:
            continue
        prep = state.model.prepare(s)
        video = generate_video(state.model, prep, args.sample_steps, args.seed or 0, args.guidance)
        tensorio.save(out / f"{s.name}.tomn", video)
        if args.ppm:
            write_ppm_sequence(out / s.name, video)
        n += 1
    if n == 0:
        raise RuntimeError(f"manifest has no samples for {sorted(t.value for t in tasks)}")
    print(f"generated={n} out={out}")
    return 0


def cmd_generate(args) -> int:
    return _generate(args, set(TaskKind) - {TaskKind.InContextEdit})


def cmd_edit(args) -> int:
    return _generate(args, {TaskKind.InContextEdit})


def cmd_eval(args) -> int:
    _require(args, "checkpoint", "manifest", "out")
    state = load_checkpoint(args.checkpoint)
    root, recs = _records(args.manifest)
    rows = []
    for rec in recs:
        s = load_sample(rec, root)
        prep = state.model.prepare(s)
        rows.append(evaluate_sample(state.model, prep, root, args.sample_steps, args.seed or 0,
                                    args.guidance, edit_kind=rec.extra.get("edit")))
    meta = {
        "checkpoint_stage": state.stage,
        "checkpoint_step": state.step,
        "config_digest": state.model.cfg.digest(),
        "manifest_digest": _file_digest(args.manifest),
        "seed": args.seed or 0,
        "sample_steps": args.sample_steps,
        "guidance": args.guidance,
    }
    csv_path, txt_path = emit_report(rows, args.out, meta)
    print(f"report={txt_path} rows={len(rows)}")
    return 0


def cmd_inspect(args) -> int:
    if args.checkpoint is None and args.manifest is None:
        raise UsageError("inspect needs --checkpoint or --manifest")
    if args.checkpoint:
        meta = read_meta(args.checkpoint)
        state = load_checkpoint(args.checkpoint)
        print(f"stage={meta['stage']}")
        print(f"step={meta['step']}")
        print(f"seed={meta['seed']}")
        print(f"config_digest={meta['config_digest']}")
        for g in state.model.GROUPS:
            print(f"{g}_digest={group_digest(state.model, g)}")
    if args.manifest:
        _, recs = _records(args.manifest)
        counts = {}
        for r in recs:
            task = infer_task(r.instruction)
            counts[task] = counts.get(task, 0) + 1
        print(f"samples={len(recs)}")
        for t in TaskKind:
            print(f"{t.value}={counts.get(t, 0)}")
    return 0


COMMANDS = {
    "datagen": cmd_datagen,
    "train": cmd_train,
    "generate": cmd_generate,
    "edit": cmd_edit,
    "eval": cmd_eval,
    "inspect": cmd_inspect,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="omnivid", description="Desk-scale unified video generation and editing.")
    sub = p.add_subparsers(dest="cmd", required=True, metavar="{" + ",".join(COMMANDS) + "}")
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="flat key=value file (dataset config or stage plan)")
        s.add_argument("--seed", type=int)
        s.add_argument("--out")
        s.add_argument("--stage", type=int, choices=(1, 2))
        s.add_argument("--steps", type=int)
        s.add_argument("--checkpoint")
        s.add_argument("--manifest")
        s.add_argument("--guidance", type=float, default=1.0)
        s.add_argument("--sample-steps", type=int, default=16)
        if name in ("generate", "edit"):
            s.add_argument("--ppm", action="store_true", help="also dump frames as PPM images")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=os.environ.get("OMNIVID_LOG", "WARNING").upper(), format="%(message)s")
    try:
        _threads()
        if args.sample_steps < 1:
            raise UsageError("--sample-steps must be >= 1")
        return COMMANDS[args.cmd](args)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # single-line report for any runtime failure
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
