"""Two-stage training.

Stage 1 aligns the adaptor alone on T2V/I2V while the DiT stays frozen; stage 2
trains adaptor and DiT jointly on all five tasks. The semantic encoder is never
trainable. Updates are applied by hand so that frozen tensors are provably
untouched and checkpoints capture the full optimizer state.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import kvconfig, tensorio
from .dit import ModelConfig, OmniModel, Prepared, fm_loss, fm_loss_at, draw_noise
from .instruction import TaskKind

log = logging.getLogger(__name__)

STAGE_TRAINABLE = {1: ("adaptor",), 2: ("adaptor", "dit")}
STAGE1_TASKS = (TaskKind.T2V, TaskKind.I2V)
OPTIMIZERS = ("sgd", "adam")


class PlanError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, task: str, seed: int, loss: float):
        super().__init__(f"non-finite loss {loss} at step {step} (task {task}, seed {seed})")
        self.snapshot = {"step": step, "task": task, "seed": seed, "loss": loss}


def default_mixture(stage: int) -> dict:
    tasks = STAGE1_TASKS if stage == 1 else tuple(TaskKind)
    return {t: 1.0 / len(tasks) for t in tasks}


@dataclass
class StagePlan:
    stage: int = 1
    mixture: dict = field(default_factory=dict)
    steps: int = 100
    lr: float = 1e-2
    seed: int = 0
    momentum: float = 0.0
    optimizer: str = "sgd"
    grad_accum: int = 1
    cfg_dropout: float = 0.0
    betas: tuple[float, float] = (0.9, 0.999)

    def __post_init__(self):
        if not self.mixture:
            self.mixture = default_mixture(self.stage)
        self.mixture = {TaskKind(k): float(v) for k, v in self.mixture.items()}
        self.validate()

    @property
    def trainable(self) -> tuple[str, ...]:
        return STAGE_TRAINABLE[self.stage]

    def validate(self, dataset: dict | None = None) -> None:
        if self.stage not in STAGE_TRAINABLE:
            raise PlanError(f"stage must be 1 or 2, got {self.stage}")
        if any(w <= 0 for w in self.mixture.values()):
            raise PlanError("mixture weights must be positive")
        if abs(sum(self.mixture.values()) - 1.0) > 1e-9:
            raise PlanError(f"mixture weights sum to {sum(self.mixture.values())}, not 1")
        if self.stage == 1 and set(self.mixture) - set(STAGE1_TASKS):
            bad = sorted(t.value for t in set(self.mixture) - set(STAGE1_TASKS))
            raise PlanError(f"stage 1 trains T2V/I2V only; got {bad}")
        if self.optimizer not in OPTIMIZERS:
            raise PlanError(f"unknown optimizer {self.optimizer!r}")
        if self.steps < 0 or self.lr < 0 or self.grad_accum < 1 or not 0 <= self.momentum < 1:
            raise PlanError("steps/lr must be >= 0, grad_accum >= 1, momentum in [0, 1)")
        if dataset is not None:
            empty = [t.value for t in self.mixture if not dataset.get(t)]
            if empty:
                raise PlanError(f"tasks with positive weight but no samples: {empty}")

    @classmethod
    def from_mapping(cls, kv: dict) -> "StagePlan":
        kw, mix = {}, {}
        for k, v in kv.items():
            if k in TaskKind.__members__:
                mix[TaskKind(k)] = float(v)
            elif k in ("stage", "steps", "seed", "grad_accum"):
                kw[k] = int(v)
            elif k in ("lr", "momentum", "cfg_dropout"):
                kw[k] = float(v)
            elif k == "optimizer":
                kw[k] = v.strip()
            elif k in ("beta1", "beta2"):
                betas = kw.setdefault("betas", [0.9, 0.999])
                betas[k == "beta2"] = float(v)
            else:
                raise PlanError(f"unknown plan key {k!r}")
        if "betas" in kw:
            kw["betas"] = tuple(kw["betas"])
        return cls(mixture=mix, **kw)

    @classmethod
    def load(cls, path) -> "StagePlan":
        return cls.from_mapping(kvconfig.load(path))


@dataclass
class TrainState:
    model: OmniModel
    moments: dict = field(default_factory=dict)  # name -> {"m": tensor, "v": tensor}
    step: int = 0
    stage: int = 1
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    history: deque = field(default_factory=lambda: deque(maxlen=256))
    seed: int = 0

    @classmethod
    def fresh(cls, cfg: ModelConfig | None = None, seed: int = 0) -> "TrainState":
        return cls(OmniModel(cfg, seed=seed), rng=np.random.default_rng(seed), seed=seed)


def group_digest(model: OmniModel, group: str) -> str:
    h = hashlib.sha256()
    for name, p in model.named_parameters():
        if model.group_of(name) == group:
            h.update(name.encode())
            h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def draw_task(plan: StagePlan, rng: np.random.Generator) -> TaskKind:
    tasks = list(plan.mixture)
    w = np.array([plan.mixture[t] for t in tasks], dtype=np.float64)
    return tasks[int(rng.choice(len(tasks), p=w / w.sum()))]


def _set_trainable(model: OmniModel, groups) -> list[tuple[str, torch.nn.Parameter]]:
    params = []
    for name, p in model.named_parameters():
        on = model.group_of(name) in groups and model.group_of(name) != "encoder"
        p.requires_grad_(on)
        if on:
            params.append((name, p))
    return params


@torch.no_grad()
def _apply_update(state: TrainState, plan: StagePlan, params) -> None:
    if plan.lr == 0:
        return
    for name, p in params:
        if p.grad is None:
            continue
        g = p.grad
        slot = state.moments.setdefault(name, {})
        if plan.optimizer == "sgd":
            if plan.momentum:
                m = slot.get("m")
                m = g.clone() if m is None else m.mul_(plan.momentum).add_(g)
                slot["m"] = m
                g = m
            p.sub_(plan.lr * g)
        else:
            b1, b2 = plan.betas
            m = slot.get("m", torch.zeros_like(p))
            v = slot.get("v", torch.zeros_like(p))
            n = slot.get("n", torch.zeros(1, dtype=torch.float64)) + 1
            m.mul_(b1).add_(g, alpha=1 - b1)
            v.mul_(b2).addcmul_(g, g, value=1 - b2)
            slot.update(m=m, v=v, n=n)
            k = float(n)
            mhat = m / (1 - b1 ** k)
            vhat = v / (1 - b2 ** k)
            p.sub_(plan.lr * mhat / (vhat.sqrt() + 1e-8))


def train_step(state: TrainState, plan: StagePlan, dataset: dict) -> float:
    """One optimizer step over ``plan.grad_accum`` micro-batches of one sample.

    ``dataset`` maps TaskKind -> list of Prepared samples. Returns the mean
    micro-batch loss.
    """
    model = state.model
    params = _set_trainable(model, plan.trainable)
    for _, p in params:
        p.grad = None
    total = 0.0
    for _ in range(plan.grad_accum):
        task = draw_task(plan, state.rng)
        shard = dataset[task]
        prep = shard[int(state.rng.integers(len(shard)))]
        loss = fm_loss(model, prep, state.rng, plan.cfg_dropout)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise TrainingDiverged(state.step, task.value, state.seed, value)
        (loss / plan.grad_accum).backward()
        total += value
    _apply_update(state, plan, params)
    state.step += 1
    state.stage = plan.stage
    mean = total / plan.grad_accum
    state.history.append((state.step, task.value, mean))
    return mean


class Telemetry:
    """Append-only CSV: step, stage, task, loss, wall_time."""

    COLUMNS = ("step", "stage", "task", "loss", "wall_time")

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        new = not self.path.exists()
        self._fh = open(self.path, "a", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh)
        if new:
            self._w.writerow(self.COLUMNS)
        self._t0 = time.perf_counter()

    def log(self, step, stage, task, loss):
        self._w.writerow((step, stage, task, f"{loss:.8g}", f"{time.perf_counter() - self._t0:.3f}"))

    def close(self):
        self._fh.close()


def train(state: TrainState, plan: StagePlan, dataset: dict, telemetry: Telemetry | None = None,
          log_every: int = 50) -> list[float]:
    plan.validate(dataset)
    losses = []
    for _ in range(plan.steps):
        loss = train_step(state, plan, dataset)
        losses.append(loss)
        if telemetry is not None:
            telemetry.log(state.step, plan.stage, state.history[-1][1], loss)
        if log_every and state.step % log_every == 0:
            recent = np.mean(losses[-log_every:])
            log.info("stage %d step %d loss %.4f", plan.stage, state.step, recent)
    return losses


def group_by_task(preps) -> dict:
    out: dict = {t: [] for t in TaskKind}
    for p in preps:
        out[p.sample.task].append(p)
    return out


@torch.no_grad()
def evaluate_loss(model: OmniModel, preps, seed: int = 0, draws: int = 4) -> float:
    """Mean flow-matching loss at fixed (t, eps) draws; comparable across checkpoints."""
    rng = np.random.default_rng(seed)
    vals = []
    for p in preps:
        for k in range(draws):
            t = (k + rng.uniform()) / draws
            vals.append(float(fm_loss_at(model, p, t, draw_noise(rng, p.x0.shape))))
    return float(np.mean(vals))


# -- checkpoints --------------------------------------------------------------


def save_checkpoint(path, state: TrainState) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    names = []
    for name, p in state.model.named_parameters():
        tensorio.save(root / "params" / f"{name}.tomn", p.detach().float().numpy())
        names.append(name)
    moments = {}
    for name, slot in sorted(state.moments.items()):
        for key, t in slot.items():
            tensorio.save(root / "moments" / f"{name}.{key}.tomn", t.detach().float().numpy())
        moments[name] = sorted(slot)
    cfg = state.model.cfg
    meta = {
        "stage": state.stage,
        "step": state.step,
        "seed": state.seed,
        "config": cfg.to_dict(),
        "config_digest": cfg.digest(),
        "encoder_seed": state.model.encoder.seed,
        "params": names,
        "moments": moments,
        "rng_state": state.rng.bit_generator.state,
        "history": list(state.history),
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    return root


def read_meta(path) -> dict:
    p = Path(path) / "meta.json"
    if not p.exists():
        raise CheckpointError(f"no checkpoint metadata at {p}")
    return json.loads(p.read_text())


def load_checkpoint(path, expected_digest: str | None = None) -> TrainState:
    root = Path(path)
    meta = read_meta(root)
    cfg = ModelConfig.from_dict(meta["config"])
    if cfg.digest() != meta["config_digest"]:
        raise CheckpointError(f"config digest mismatch: stored {meta['config_digest']}, recomputed {cfg.digest()}")
    if expected_digest is not None and expected_digest != meta["config_digest"]:
        raise CheckpointError(
            f"config digest mismatch: checkpoint {meta['config_digest']}, expected {expected_digest}"
        )
    model = OmniModel(cfg)
    if model.encoder.seed != meta["encoder_seed"]:
        raise CheckpointError("encoder seed differs from checkpoint provenance")
    params = dict(model.named_parameters())
    with torch.no_grad():
        for name in meta["params"]:
            arr = tensorio.load(root / "params" / f"{name}.tomn")
            if name not in params or tuple(params[name].shape) != arr.shape:
                raise CheckpointError(f"parameter {name} does not fit the model")
            params[name].copy_(torch.from_numpy(arr))
    moments = {}
    for name, keys in meta["moments"].items():
        moments[name] = {}
        for key in keys:
            arr = tensorio.load(root / "moments" / f"{name}.{key}.tomn")
            t = torch.from_numpy(arr)
            moments[name][key] = t.double() if key == "n" else t
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    hist = deque((tuple(h) for h in meta["history"]), maxlen=256)
    return TrainState(model, moments, meta["step"], meta["stage"], rng, hist, meta["seed"])
