"""
Two-stage training and sampling
===============================

Stage 1 trains only the adaptor on text/image-to-video; stage 2 trains the
adaptor and the DiT on all five tasks. This demo runs a short schedule by
default. Set ``OMNIVID_DEMO_FULL=1`` for the full overfit recipe (500 + 2000
steps, a few minutes on one CPU).
"""

import os
import tempfile
from pathlib import Path

from omnivid.datagen import DatasetConfig, build_dataset
from omnivid.instruction import TaskKind, load_sample, read_manifest
from omnivid.pipeline import evaluate_sample
from omnivid.trainer import StagePlan, TrainState, evaluate_loss, group_by_task, group_digest, train

full = os.environ.get("OMNIVID_DEMO_FULL") == "1"
steps1, steps2 = (500, 2000) if full else (30, 120)
recipe = dict(lr=2e-3, optimizer="adam", grad_accum=8)

root = Path(tempfile.mkdtemp()) / "ds"
build_dataset(DatasetConfig(canvas=16, frames=4, seed=7), root)
recs = read_manifest(root / "manifest.jsonl")
state = TrainState.fresh(seed=0)
preps = [state.model.prepare(load_sample(r, root)) for r in recs]
data = group_by_task(preps)
print(len(recs), "samples;", {t.value: len(v) for t, v in data.items()})

# %%
# Stage 1 leaves the DiT untouched.

dit_before = group_digest(state.model, "dit")
loss0 = evaluate_loss(state.model, preps)
train(state, StagePlan(1, steps=steps1, **recipe), data, log_every=0)
print("stage 1: DiT unchanged =", group_digest(state.model, "dit") == dit_before)

# %%
# Stage 2 trains everything except the frozen semantic encoder.

train(state, StagePlan(2, steps=steps2, **recipe), data, log_every=0)
loss1 = evaluate_loss(state.model, preps)
print(f"loss {loss0:.4f} -> {loss1:.4f} ({loss1 / loss0:.3f}x)")

# %%
# Sample one first-last-frame and one editing instance.

for rec, prep in zip(recs, preps):
    task = prep.sample.task
    if task in (TaskKind.FLF2V, TaskKind.InContextEdit) and not (prep.sample.edit_mask is not None
                                                                  and prep.sample.edit_mask.all()):
        row = evaluate_sample(state.model, prep, root, steps=16, seed=1)
        print({k: round(v, 4) if isinstance(v, float) else v for k, v in row.items()})
        if task is TaskKind.InContextEdit:
            break
