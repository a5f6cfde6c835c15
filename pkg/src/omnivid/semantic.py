"""Frozen semantic encoder stand-in and the trainable adaptor.

The encoder embeds whitespace-separated words through hashed byte trigrams,
appends one summary token per visual reference (the mean latent over valid
frames), runs a small fixed-seed transformer and returns the hidden state of
the second-to-last layer. Its weights never receive gradients.
"""

from __future__ import annotations

import math
import zlib

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

D_SEM = 48
D_HIDDEN = 96
MAX_TOKENS = 64
ENCODER_SEED = 20240611
_VOCAB = 2048
_REF_KINDS = ("image", "video", "first_frame", "last_frame")


def _trigram_ids(word: str) -> list[int]:
    b = b"<" + word.encode("utf-8") + b">"
    return [zlib.crc32(b[i : i + 3]) % _VOCAB for i in range(len(b) - 2)]


def tokenize(text: str) -> list[str]:
    return text.split()


class _Block(nn.Module):
    def __init__(self, d: int, heads: int):
        super().__init__()
        self.heads = heads
        self.norm1 = nn.LayerNorm(d)
        self.qkv = nn.Linear(d, 3 * d)
        self.proj = nn.Linear(d, d)
        self.norm2 = nn.LayerNorm(d)
        self.fc1 = nn.Linear(d, 2 * d)
        self.fc2 = nn.Linear(2 * d, d)

    def forward(self, x):
        n, d = x.shape

        def lin(m, h):
            return F.linear(h, m.weight.to(h.dtype), m.bias.to(h.dtype))

        def norm(m, h):
            return F.layer_norm(h, (d,), m.weight.to(h.dtype), m.bias.to(h.dtype))

        q, k, v = lin(self.qkv, norm(self.norm1, x)).view(n, 3, self.heads, d // self.heads).permute(1, 2, 0, 3)
        att = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(d // self.heads), dim=-1)
        x = x + lin(self.proj, (att @ v).transpose(0, 1).reshape(n, d))
        return x + lin(self.fc2, F.gelu(lin(self.fc1, norm(self.norm2, x))))


class SemanticEncoder(nn.Module):
    """Deterministic frozen encoder. Weights come from ``seed`` only."""

    def __init__(self, d_sem: int = D_SEM, layers: int = 2, heads: int = 4, seed: int = ENCODER_SEED):
        super().__init__()
        if layers < 2:
            raise ValueError("encoder needs >= 2 layers to export a penultimate state")
        self.d_sem = d_sem
        self.seed = seed
        self.trigram = nn.Parameter(torch.zeros(_VOCAB, d_sem))
        self.ref_proj = nn.Parameter(torch.zeros(d_sem, d_sem))
        self.kind_emb = nn.Parameter(torch.zeros(len(_REF_KINDS), d_sem))
        self.blocks = nn.ModuleList(_Block(d_sem, heads) for _ in range(layers))
        self._init_from_seed(seed)
        self.requires_grad_(False)

    def _init_from_seed(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        with torch.no_grad():
            for name, p in self.named_parameters():
                if name.endswith("bias"):
                    p.zero_()
                elif "norm" in name:
                    p.fill_(1.0)
                else:
                    fan_in = p.shape[-1] if p.ndim > 1 else 1
                    w = rng.standard_normal(tuple(p.shape)) / math.sqrt(fan_in)
                    p.copy_(torch.from_numpy(w))

    def _summary(self, latent) -> np.ndarray:
        vals = np.asarray(latent.values, dtype=np.float64)
        valid = np.asarray(latent.validity, dtype=bool)
        vals = vals[valid] if valid.any() else vals
        return vals.reshape(-1, vals.shape[-1]).mean(axis=0)

    @torch.no_grad()
    def forward(self, text: str, refs=(), summaries=()) -> torch.Tensor:
        """Semantic tokens (L_s, d_sem) in float64.

        ``refs`` are the instruction's VisualRefs and ``summaries`` the encoded
        LatentGrid for each, in the same order.
        """
        if len(refs) != len(summaries):
            raise ValueError(f"{len(refs)} refs but {len(summaries)} summaries")
        words = tokenize(text)[: max(0, MAX_TOKENS - len(refs))]
        w = self.trigram.double()
        rows = []
        for word in words:
            ids = torch.tensor(_trigram_ids(word))
            rows.append(w[ids].sum(0) / math.sqrt(len(ids)))
        for ref, grid in zip(refs, summaries):
            s = torch.from_numpy(self._summary(grid))
            if s.shape[0] != self.d_sem:
                raise ValueError(f"summary width {s.shape[0]} != d_sem {self.d_sem}")
            rows.append(s @ self.ref_proj.double() + self.kind_emb.double()[_REF_KINDS.index(ref.kind)])
        rows = rows[:MAX_TOKENS]
        if not rows:
            return torch.zeros(0, self.d_sem, dtype=torch.float64)
        x = torch.stack(rows)
        x = x + _sinusoid(x.shape[0], self.d_sem)
        hidden = [x]
        for blk in self.blocks:
            hidden.append(blk(hidden[-1]))
        return hidden[-2]

    def encode_instruction(self, instr, summaries=()) -> torch.Tensor:
        return self(instr.text, instr.refs, summaries)


def _sinusoid(n: int, d: int) -> torch.Tensor:
    pos = torch.arange(n, dtype=torch.float64)[:, None]
    i = torch.arange(d // 2, dtype=torch.float64)[None]
    ang = pos / (10000.0 ** (2 * i / d))
    return torch.cat([torch.sin(ang), torch.cos(ang)], dim=1)


class Adaptor(nn.Module):
    """affine -> GELU -> affine, from encoder width to model width."""

    def __init__(self, d_sem: int = D_SEM, d_hidden: int = D_HIDDEN, d_model: int = 64):
        super().__init__()
        self.d_sem = d_sem
        self.fc1 = nn.Linear(d_sem, d_hidden)
        self.fc2 = nn.Linear(d_hidden, d_model)

    def pre_activation(self, tokens: torch.Tensor) -> torch.Tensor:
        if tokens.shape[-1] != self.d_sem:
            raise ValueError(f"semantic width {tokens.shape[-1]} != adaptor input {self.d_sem}")
        return self.fc1(tokens.to(self.fc1.weight.dtype))

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.fc2(F.gelu(self.pre_activation(tokens), approximate="tanh"))
