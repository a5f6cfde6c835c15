import numpy as np
import pytest
import torch

from omnivid.codec import LatentGrid
from omnivid.instruction import Instruction, VisualRef
from omnivid.semantic import MAX_TOKENS, Adaptor, SemanticEncoder, _sinusoid, _trigram_ids, tokenize


@pytest.fixture(scope="module")
def enc():
    return SemanticEncoder()


def _grid(value):
    return LatentGrid(np.full((1, 2, 2, 48), value, np.float32), "reference_image")


def test_deterministic_bitwise(enc):
    a = enc("a red disk bounces")
    b = SemanticEncoder()("a red disk bounces")
    assert a.dtype == torch.float64 and torch.equal(a, b)


def test_length_rules(enc):
    assert enc("one two three four five").shape == (5, 48)
    instr = Instruction("edit this", (VisualRef("image", "x"), VisualRef("video", "y")))
    assert enc.encode_instruction(instr, [_grid(0.1), _grid(0.2)]).shape == (4, 48)
    assert enc(" ".join(["w"] * 200)).shape == (MAX_TOKENS, 48)
    assert enc("").shape == (0, 48)


def test_ref_payload_sensitivity(enc):
    refs = (VisualRef("image", "x"),)
    a = enc("put it here", refs, [_grid(0.1)])
    b = enc("put it here", refs, [_grid(0.7)])
    assert (a != b).any(dim=1).sum() >= 1


def test_summaries_must_align(enc):
    with pytest.raises(ValueError):
        enc("x", (VisualRef("image", "x"),), [])


def test_returns_penultimate_state(enc):
    words = tokenize("a green triangle")
    w = enc.trigram.double()
    rows = [w[torch.tensor(_trigram_ids(x))].sum(0) / np.sqrt(len(_trigram_ids(x))) for x in words]
    x = torch.stack(rows) + _sinusoid(len(rows), 48)
    penultimate = enc.blocks[0](x)
    assert torch.allclose(enc("a green triangle"), penultimate, atol=0, rtol=0)
    assert not torch.allclose(enc("a green triangle"), enc.blocks[1](penultimate))


def test_encoder_is_frozen(enc):
    assert not any(p.requires_grad for p in enc.parameters())


def test_adaptor_zero_params_give_zero():
    ad = Adaptor().double()
    with torch.no_grad():
        for p in ad.parameters():
            p.zero_()
    assert (ad(torch.randn(3, 48, dtype=torch.float64)) == 0).all()


def test_adaptor_shapes_and_width_check():
    ad = Adaptor().double()
    assert ad(torch.zeros(7, 48, dtype=torch.float64)).shape == (7, 64)
    with pytest.raises(ValueError):
        ad(torch.zeros(2, 47, dtype=torch.float64))


def test_first_layer_is_linear():
    ad = Adaptor().double()
    x = torch.randn(4, 48, dtype=torch.float64)
    b = ad.fc1.bias
    torch.testing.assert_close(ad.pre_activation(2 * x) - b, 2 * (ad.pre_activation(x) - b))


def test_adaptor_gradient_finite_difference():
    torch.manual_seed(0)
    ad = Adaptor().double()
    x = torch.randn(5, 48, dtype=torch.float64)
    target = torch.randn(5, 64, dtype=torch.float64)

    def loss():
        return ((ad(x) - target) ** 2).mean()

    loss().backward()
    rng = np.random.default_rng(0)
    h = 1e-6
    for p in ad.parameters():
        flat = p.data.view(-1)
        grad = p.grad.view(-1)
        for i in rng.choice(flat.numel(), 32, replace=False):
            old = flat[i].item()
            flat[i] = old + h
            up = loss().item()
            flat[i] = old - h
            down = loss().item()
            flat[i] = old
            fd = (up - down) / (2 * h)
            assert abs(fd - grad[i].item()) <= 1e-3 * max(abs(fd), abs(grad[i].item()), 1e-8)
