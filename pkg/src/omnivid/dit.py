"""Diffusion transformer over joint semantic / condition / target tokens.

Every task uses the same network. A sample is flattened into one sequence::

    [ semantic tokens | condition tokens (per ref, offset per policy) | noisy target ]

Semantic tokens carry no 3D position (their rotation is the identity). Visual
tokens are rotated by 3D RoPE at their offset positions, and a learned role
embedding separates tokens that share a position. Training uses rectified flow:
``x_t = (1 - t) x0 + t eps`` with velocity target ``eps - x0``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .codec import LatentGrid, concat_conditions
from .instruction import TaskKind, TaskSample
from .rope import RopeConfig, angles, apply_rope_torch, offset_policy, position_array, rope_tables
from .semantic import D_HIDDEN, D_SEM, Adaptor, SemanticEncoder

ROLE_IDS = {
    "semantic": 0,
    "target": 1,
    "condition_video": 2,
    "reference_image": 3,
    "first_frame": 4,
    "last_frame": 5,
}


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    layers: int = 4
    heads: int = 2
    head_dim: int = 32
    rope: RopeConfig = field(default_factory=RopeConfig)
    latent_shape: tuple[int, int, int, int] = (4, 4, 4, 48)
    t_embed: int = 64
    mlp_ratio: int = 4
    d_sem: int = D_SEM
    d_hidden: int = D_HIDDEN

    def __post_init__(self):
        if min(self.d_model, self.heads, self.head_dim, self.t_embed) <= 0 or self.layers < 0:
            raise ShapeError("config sizes must be positive")
        if self.d_model != self.heads * self.head_dim:
            raise ShapeError(f"d_model {self.d_model} != heads*head_dim {self.heads * self.head_dim}")
        if self.rope.head_dim != self.head_dim:
            raise ShapeError("rope head_dim must equal head_dim")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rope"]["split"] = list(self.rope.split)
        d["latent_shape"] = list(self.latent_shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        r = dict(d.pop("rope"))
        r["split"] = tuple(r["split"])
        d["latent_shape"] = tuple(d["latent_shape"])
        return cls(rope=RopeConfig(**r), **d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Layout:
    """Non-learned part of a token sequence; cached per sample."""

    positions: np.ndarray  # (N, 3) int, semantic rows are zero
    roles: np.ndarray  # (N,) int role ids
    valid: np.ndarray  # (N,) bool attention validity
    n_sem: int
    n_cond: int
    target_shape: tuple[int, int, int, int]
    segments: list = field(default_factory=list)  # (start_token, stop_token, role, offset)

    @property
    def n_target(self) -> int:
        f, h, w, _ = self.target_shape
        return f * h * w


@dataclass
class TokenSequence:
    tokens: torch.Tensor  # (N, d_model)
    positions: np.ndarray
    roles: np.ndarray
    valid: np.ndarray
    layout: Layout

    def __post_init__(self):
        n = self.tokens.shape[0]
        if not (len(self.positions) == len(self.roles) == len(self.valid) == n):
            raise ShapeError("tokens, positions, roles and validity must have equal length")


def build_layout(task, conditions, target_shape, n_sem: int) -> Layout:
    """Positions, roles and validity for one sample, in sequence order."""
    task = TaskKind(task)
    f, h, w, c = target_shape
    pos = [np.zeros((n_sem, 3), np.int64)]
    roles = [np.full(n_sem, ROLE_IDS["semantic"])]
    valid = [np.ones(n_sem, bool)]
    segments = []
    n_cond = 0
    if conditions:
        joined, segs = concat_conditions(conditions)
        if joined.shape[1:] != (h, w, c):
            raise ShapeError(f"condition grid {joined.shape[1:]} incompatible with target {(h, w, c)}")
        for start, stop, role in segs:
            off = offset_policy(task, role, (f, h, w))
            p = position_array(stop - start, h, w, off)
            pos.append(p)
            roles.append(np.full(len(p), ROLE_IDS[role]))
            valid.append(np.repeat(joined.validity[start:stop], h * w))
            a = n_sem + n_cond
            segments.append((a, a + len(p), role, tuple(off)))
            n_cond += len(p)
    pos.append(position_array(f, h, w))
    roles.append(np.full(f * h * w, ROLE_IDS["target"]))
    valid.append(np.ones(f * h * w, bool))
    return Layout(
        np.concatenate(pos), np.concatenate(roles), np.concatenate(valid),
        n_sem, n_cond, tuple(target_shape), segments,
    )


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=t.dtype) / half)
    args = 1000.0 * t.reshape(-1, 1) * freqs[None]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


def _modulate(x, shift, scale):
    return x * (1 + scale) + shift


class Block(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.d_model
        self.heads, self.head_dim = cfg.heads, cfg.head_dim
        self.norm1 = nn.LayerNorm(d, elementwise_affine=False)
        self.qkv = nn.Linear(d, 3 * d)
        self.proj = nn.Linear(d, d)
        self.norm2 = nn.LayerNorm(d, elementwise_affine=False)
        self.fc1 = nn.Linear(d, cfg.mlp_ratio * d)
        self.fc2 = nn.Linear(cfg.mlp_ratio * d, d)
        self.ada = nn.Linear(d, 6 * d)

    def qk(self, x, c, cos, sin):
        n = x.shape[0]
        shift, scale = self.ada(c).chunk(6, dim=-1)[:2]
        q, k, v = self.qkv(_modulate(self.norm1(x), shift, scale)).view(n, 3, self.heads, self.head_dim).unbind(1)
        q = apply_rope_torch(q.transpose(0, 1), cos, sin)
        k = apply_rope_torch(k.transpose(0, 1), cos, sin)
        return q, k, v.transpose(0, 1)

    def logits(self, x, c, cos, sin):
        q, k, _ = self.qk(x, c, cos, sin)
        return q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)

    def forward(self, x, c, cos, sin, key_bias):
        n, d = x.shape
        sh1, sc1, g1, sh2, sc2, g2 = self.ada(c).chunk(6, dim=-1)
        q, k, v = self.qk(x, c, cos, sin)
        att = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(self.head_dim) + key_bias, dim=-1)
        x = x + g1 * self.proj((att @ v).transpose(0, 1).reshape(n, d))
        h = self.fc2(F.gelu(self.fc1(_modulate(self.norm2(x), sh2, sc2)), approximate="tanh"))
        return x + g2 * h


class DiT(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d, c_l = cfg.d_model, cfg.latent_shape[-1]
        self.patch_in = nn.Linear(c_l, d)
        self.role_emb = nn.Embedding(len(ROLE_IDS), d)
        self.t_mlp = nn.Sequential(nn.Linear(cfg.t_embed, d), nn.SiLU(), nn.Linear(d, d))
        self.blocks = nn.ModuleList(Block(cfg) for _ in range(cfg.layers))
        self.norm_out = nn.LayerNorm(d, elementwise_affine=False)
        self.ada_out = nn.Linear(d, 2 * d)
        self.head = nn.Linear(d, c_l)
        self.reset_parameters()

    def reset_parameters(self, seed: int = 0) -> None:
        g = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for name, p in self.named_parameters():
                if name.endswith("bias"):
                    p.zero_()
                elif name.startswith("role_emb"):
                    p.normal_(0.0, 0.02, generator=g)
                else:
                    bound = math.sqrt(6.0 / (p.shape[0] + p.shape[1]))
                    p.uniform_(-bound, bound, generator=g)
            # near-zero (not zero) modulation and head: a closed network would
            # block all gradient to the adaptor while the DiT is frozen
            for lin in [blk.ada for blk in self.blocks] + [self.ada_out, self.head]:
                lin.weight.mul_(0.1)

    def assemble_sequence(self, layout: Layout, semantic: torch.Tensor, cond: torch.Tensor | None,
                          noisy_target: torch.Tensor) -> TokenSequence:
        """Embed ``[semantic | conditions | noisy target]`` into one sequence.

        ``semantic`` is already adapted to d_model; ``cond`` is the concatenated
        condition latent flattened to (n_cond, c_l) and ``noisy_target`` the
        target latent flattened to (n_target, c_l).
        """
        if semantic.shape[0] != layout.n_sem:
            raise ShapeError(f"{semantic.shape[0]} semantic tokens, layout expects {layout.n_sem}")
        if noisy_target.shape[0] != layout.n_target:
            raise ShapeError(f"{noisy_target.shape[0]} target tokens, layout expects {layout.n_target}")
        parts = [semantic]
        if layout.n_cond:
            if cond is None or cond.shape[0] != layout.n_cond:
                raise ShapeError("condition tokens do not match layout")
            parts.append(self.patch_in(cond))
        parts.append(self.patch_in(noisy_target))
        x = torch.cat(parts, 0) + self.role_emb(torch.as_tensor(layout.roles))
        return TokenSequence(x, layout.positions, layout.roles, layout.valid, layout)

    def rope_for(self, positions: np.ndarray, n_sem: int, dtype):
        ang = angles(positions, self.cfg.rope)
        ang[:n_sem] = 0.0
        return rope_tables(ang, dtype)

    def cond_vector(self, t, dtype) -> torch.Tensor:
        t = torch.as_tensor(t, dtype=dtype).reshape(1)
        return self.t_mlp(timestep_embedding(t, self.cfg.t_embed))

    def forward(self, seq: TokenSequence, t, valid_override=None) -> torch.Tensor:
        """Velocity prediction over target tokens, shaped like the target latent."""
        x = seq.tokens
        if x.shape[-1] != self.cfg.d_model:
            raise ShapeError(f"token width {x.shape[-1]} != d_model {self.cfg.d_model}")
        valid = seq.valid if valid_override is None else valid_override
        cos, sin = self.rope_for(seq.positions, seq.layout.n_sem, x.dtype)
        key_bias = torch.zeros(x.shape[0], dtype=x.dtype)
        key_bias[~torch.as_tensor(np.asarray(valid, bool))] = float("-inf")
        c = self.cond_vector(t, x.dtype)
        for blk in self.blocks:
            x = blk(x, c, cos, sin, key_bias)
        shift, scale = self.ada_out(c).chunk(2, dim=-1)
        out = self.head(_modulate(self.norm_out(x[-seq.layout.n_target :]), shift, scale))
        return out.reshape(seq.layout.target_shape)

    def attention_logits(self, seq: TokenSequence, t, layer: int = 0) -> torch.Tensor:
        cos, sin = self.rope_for(seq.positions, seq.layout.n_sem, seq.tokens.dtype)
        return self.blocks[layer].logits(seq.tokens, self.cond_vector(t, seq.tokens.dtype), cos, sin)


class OmniModel(nn.Module):
    """Frozen semantic encoder + trainable adaptor + DiT."""

    GROUPS = ("encoder", "adaptor", "dit")

    def __init__(self, cfg: ModelConfig | None = None, seed: int = 0):
        super().__init__()
        self.cfg = cfg or ModelConfig()
        self.encoder = SemanticEncoder(self.cfg.d_sem)
        self.adaptor = Adaptor(self.cfg.d_sem, self.cfg.d_hidden, self.cfg.d_model)
        self.dit = DiT(self.cfg)
        self.init_trainable(seed)

    def init_trainable(self, seed: int) -> None:
        g = torch.Generator().manual_seed(seed + 1)
        with torch.no_grad():
            for lin in (self.adaptor.fc1, self.adaptor.fc2):
                bound = math.sqrt(6.0 / sum(lin.weight.shape))
                lin.weight.uniform_(-bound, bound, generator=g)
                lin.bias.zero_()
        self.dit.reset_parameters(seed)

    @property
    def dtype(self):
        return self.dit.head.weight.dtype

    def group_of(self, name: str) -> str:
        return name.split(".", 1)[0]

    def prepare(self, sample: TaskSample) -> "Prepared":
        cfg = self.cfg
        if tuple(sample.target.shape[1:]) != tuple(cfg.latent_shape[1:]):
            raise ShapeError(f"target latent {sample.target.shape} incompatible with {cfg.latent_shape}")
        summaries = _ref_summaries(sample)
        sem = self.encoder(sample.instruction.text, sample.instruction.refs, summaries)
        layout = build_layout(sample.task, sample.conditions, sample.target.shape, sem.shape[0])
        cond = None
        if sample.conditions:
            joined, _ = concat_conditions(sample.conditions)
            cond = torch.from_numpy(joined.values.reshape(-1, joined.shape[-1]).astype(np.float64))
        x0 = torch.from_numpy(sample.target.values.astype(np.float64))
        return Prepared(sample, sem, layout, cond, x0)

    def velocity(self, prep: "Prepared", x_t: torch.Tensor, t, drop_semantic: bool = False) -> torch.Tensor:
        dt = self.dtype
        sem = self.adaptor(prep.semantic.to(dt))
        cond = None if prep.cond is None else prep.cond.to(dt)
        seq = self.dit.assemble_sequence(prep.layout, sem, cond, x_t.to(dt).reshape(prep.layout.n_target, -1))
        valid = None
        if drop_semantic:
            valid = prep.layout.valid.copy()
            valid[: prep.layout.n_sem] = False
        return self.dit(seq, t, valid)


@dataclass
class Prepared:
    sample: TaskSample
    semantic: torch.Tensor  # (L_s, d_sem) float64, frozen encoder output
    layout: Layout
    cond: torch.Tensor | None  # (n_cond, c_l) float64
    x0: torch.Tensor  # target latent (f, h, w, c) float64


def _ref_summaries(sample: TaskSample) -> list[LatentGrid]:
    """One grid per instruction ref, matching ``sample.conditions`` order."""
    return list(sample.conditions)


def draw_noise(rng: np.random.Generator, shape) -> torch.Tensor:
    return torch.from_numpy(rng.standard_normal(shape))


def fm_loss(model: OmniModel, prep: Prepared, rng: np.random.Generator, cfg_dropout: float = 0.0) -> torch.Tensor:
    """Rectified-flow loss at one uniformly drawn time. Draw order: t, eps, drop."""
    t = float(rng.uniform())
    eps = draw_noise(rng, prep.x0.shape)
    drop = bool(rng.uniform() < cfg_dropout) if cfg_dropout > 0 else False
    return fm_loss_at(model, prep, t, eps, drop)


def fm_loss_at(model: OmniModel, prep: Prepared, t: float, eps: torch.Tensor, drop: bool = False) -> torch.Tensor:
    dt = model.dtype
    x0, eps = prep.x0.to(dt), eps.to(dt)
    x_t = (1 - t) * x0 + t * eps
    v = model.velocity(prep, x_t, t, drop_semantic=drop)
    return ((v - (eps - x0)) ** 2).mean()


def euler_sample(velocity_fn, noise: torch.Tensor, steps: int) -> torch.Tensor:
    """Integrate dx/dt = v from t=1 down to t=0 with uniform Euler steps."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    x = noise.clone()
    dt = 1.0 / steps
    for i in range(steps):
        t = 1.0 - i * dt
        x = x - dt * velocity_fn(x, t).to(x.dtype)
    return x


@torch.no_grad()
def sample(model: OmniModel, prep: Prepared, steps: int = 16, seed: int = 0, guidance: float = 1.0,
           velocity_fn=None) -> LatentGrid:
    """Generate a target latent for a prepared sample.

    ``velocity_fn(x, t)`` overrides the network, e.g. with an oracle field.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    noise = draw_noise(np.random.default_rng(seed), prep.x0.shape)
    if velocity_fn is None:
        def velocity_fn(x, t):
            v = model.velocity(prep, x, t).double()
            if guidance != 1.0:
                vu = model.velocity(prep, x, t, drop_semantic=True).double()
                v = vu + guidance * (v - vu)
            return v
    x = euler_sample(velocity_fn, noise, steps)
    return LatentGrid(x.numpy().astype(np.float32), "target")
