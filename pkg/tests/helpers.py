"""Shared oracles for the DiT tests and the acceptance suite."""

import numpy as np
import torch

from omnivid.dit import ModelConfig, OmniModel, fm_loss_at
from omnivid.instruction import load_sample, read_manifest

GRAD_FLOOR = 1e-6


def small_model(layers=2, seed=0, jitter=0.05):
    """Double-precision 2-layer, d_model=32 model with randomised trainable params."""
    cfg = ModelConfig(d_model=32, layers=layers, heads=1, head_dim=32)
    model = OmniModel(cfg, seed=seed).double()
    g = torch.Generator().manual_seed(seed + 100)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if not name.startswith("encoder"):
                p.add_(jitter * torch.randn(p.shape, generator=g, dtype=p.dtype))
    return model


def prepared_by_task(model, root):
    out = {}
    for rec in read_manifest(root / "manifest.jsonl"):
        s = load_sample(rec, root)
        out.setdefault(s.task, model.prepare(s))
    return out


def finite_difference_check(model, prep, per_tensor=32, h=1e-6, seed=0, t=0.37):
    """Worst relative error between autograd and central differences.

    ``per_tensor`` entries are sampled from every trainable tensor. Relative
    error is |a - n| / max(|a|, |n|, GRAD_FLOOR).
    """
    eps = torch.from_numpy(np.random.default_rng(seed).standard_normal(tuple(prep.x0.shape)))
    params = [(n, p) for n, p in model.named_parameters() if not n.startswith("encoder")]
    for _, p in params:
        p.requires_grad_(True)
        p.grad = None

    def loss():
        return fm_loss_at(model, prep, t, eps)

    loss().backward()
    rng = np.random.default_rng(seed)
    worst, where = 0.0, None
    with torch.no_grad():
        for name, p in params:
            flat, grad = p.data.view(-1), p.grad.view(-1)
            idx = rng.choice(flat.numel(), min(per_tensor, flat.numel()), replace=False)
            for i in idx:
                old = flat[i].item()
                flat[i] = old + h
                up = loss().item()
                flat[i] = old - h
                down = loss().item()
                flat[i] = old
                num, ana = (up - down) / (2 * h), grad[i].item()
                err = abs(num - ana) / max(abs(num), abs(ana), GRAD_FLOOR)
                if err > worst:
                    worst, where = err, (name, int(i), ana, num)
    return worst, where
