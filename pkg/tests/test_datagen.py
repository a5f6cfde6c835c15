import numpy as np
import pytest

from omnivid.datagen import build as build_mod
from omnivid.datagen.build import DatasetConfig, DatasetError, build_dataset, dataset_digest
from omnivid.datagen.pairs import (
    N_STYLES, PairError, apply_style, diff_objects, edge_map, extract_reference, make_insertion_pair,
    make_modify_pair, make_removal_pair, make_style_pair, reference_pixels,
)
from omnivid.datagen.scene import (
    COLOR_NAMES, PALETTE, SceneObject, SceneSpec, footprints, random_scene, render, render_background,
)
from omnivid.datagen.verify import (
    IDENTITY, INCOMPLETE, INPAINTING, REASONS, UNINTENDED, color_histogram, corrupt,
    histogram_intersection, verify_sample,
)
from omnivid.instruction import TaskKind, load_sample, read_manifest


def _scene(seed, canvas=64, frames=8, n=2):
    return random_scene(np.random.default_rng(seed), canvas, frames, n)


def test_render_deterministic_and_in_range():
    spec = _scene(0)
    a, ma = render(spec, seed=1)
    b, mb = render(spec, seed=1)
    assert a.tobytes() == b.tobytes() and np.array_equal(ma, mb)
    assert a.dtype == np.float32 and 0 <= a.min() and a.max() <= 1


def test_visible_masks_nonempty_and_background_elsewhere():
    for seed in range(10):
        spec = _scene(seed)
        video, masks = render(spec)
        assert masks.reshape(len(spec.objects), -1).any(axis=1).all()
        bg = render_background(spec.background, spec.canvas)
        empty = ~masks.any(axis=0)
        for t in range(spec.frames):
            assert np.array_equal(video[t][empty[t]], bg[empty[t]])
        # visible masks never overlap and sit inside the unoccluded footprints
        assert (masks.sum(axis=0) <= 1).all() and not (masks & ~footprints(spec)).any()


def test_objects_stay_in_canvas():
    obj = SceneObject("square", "red", 5.0, (10.0, 10.0), (7.0, -9.0))
    spec = SceneSpec(32, 30, 0, (obj,))
    fp = footprints(spec)
    assert (fp[0].reshape(30, -1).sum(axis=1) == fp[0, 0].sum()).all()


def test_style_identity_and_grayscale():
    video, _ = render(_scene(1))
    assert np.array_equal(make_style_pair(video, 0).target, video)
    g = make_style_pair(video, 1).target
    assert np.array_equal(g[..., 0], g[..., 1]) and np.array_equal(g[..., 1], g[..., 2])
    with pytest.raises(PairError):
        apply_style(video, N_STYLES)


def test_style_is_per_pixel():
    video, _ = render(_scene(2))
    for sid in range(N_STYLES):
        out = apply_style(video, sid)
        flat = apply_style(video.reshape(-1, 1, 1, 3), sid).reshape(video.shape)
        assert np.array_equal(out, flat)


def test_style_edge_agreement():
    assert N_STYLES == 18
    for seed in range(10):
        video, _ = render(_scene(100 + seed))
        src = edge_map(video)
        for sid in range(N_STYLES):
            assert (edge_map(apply_style(video, sid)) == src).mean() >= 0.95, (seed, sid)


def test_insertion_pair():
    spec = _scene(3)
    video, masks = render(spec)
    pair = make_insertion_pair(spec, 0, video, masks)
    out = ~pair.edit_mask
    assert np.array_equal(pair.source[out], pair.target[out])
    assert np.array_equal(pair.target, video)
    obj = spec.objects[0]
    assert obj.shape in pair.instruction and obj.color in pair.instruction
    again = make_insertion_pair(spec, 0)
    assert again.source.tobytes() == pair.source.tobytes()
    with pytest.raises(PairError):
        make_insertion_pair(spec, 5)


def test_insertion_rejects_giant_object():
    big = SceneObject("square", "red", 30.0, (32.0, 32.0), (0.0, 0.0))
    with pytest.raises(PairError, match="half"):
        make_insertion_pair(SceneSpec(64, 2, 0, (big,)), 0)


def test_removal_pair():
    spec = _scene(4)
    original, masks = render(spec)
    pair = make_removal_pair(spec, seed=9)
    assert np.array_equal(pair.target, original)
    assert np.array_equal(pair.source[~pair.edit_mask], pair.target[~pair.edit_mask])
    assert not (pair.edit_mask[0] & masks[:, 0].any(axis=0)).any()
    assert pair.instruction.startswith("remove the ") and pair.subject["color"] in pair.instruction


def test_removal_without_room():
    big = SceneObject("square", "red", 32.0, (32.0, 32.0), (0.0, 0.0))
    with pytest.raises(PairError):
        make_removal_pair(SceneSpec(64, 2, 0, (big,)), seed=0, attempts=5)


def test_modify_pairs():
    spec = _scene(5)
    sub = make_modify_pair(spec, "subject", seed=1, index=0)
    assert np.array_equal(sub.source[~sub.edit_mask], sub.target[~sub.edit_mask])
    assert (sub.source[sub.edit_mask] != sub.target[sub.edit_mask]).any(axis=-1).all()
    assert sub.subject["color"] != spec.objects[0].color
    bg = make_modify_pair(spec, "background", seed=1)
    fg = ~bg.edit_mask
    assert np.array_equal(bg.source[fg], bg.target[fg])
    with pytest.raises(PairError):
        make_modify_pair(spec, "sideways")


def test_background_swap_needs_separable_foreground():
    big = SceneObject("square", "red", 22.0, (32.0, 32.0), (0.0, 0.0))
    with pytest.raises(PairError, match="separable"):
        make_modify_pair(SceneSpec(64, 2, 0, (big,)), "background")


def test_extract_reference():
    for seed in range(10):
        pair = make_removal_pair(_scene(seed), seed)
        ref = extract_reference(pair)
        obj = (ref < 1.0).any(axis=-1)
        assert (ref[~obj] == 1.0).all() and ref.shape == (64, 64, 3)
        assert obj.sum() == pair.edit_mask.reshape(pair.edit_mask.shape[0], -1).sum(axis=1).max()
        assert np.array_equal(extract_reference(pair), ref)
    with pytest.raises(PairError):
        extract_reference(make_style_pair(render(_scene(0))[0], 3))


def test_diff_objects():
    video, _ = render(_scene(6))
    desc, mask = diff_objects(video, video)
    assert desc is None and not mask.any()
    for seed in range(10):
        spec = _scene(seed)
        pair = make_insertion_pair(spec, 1)
        desc, mask = diff_objects(pair.source, pair.target)
        assert np.array_equal(mask, pair.edit_mask)
        assert desc["color"] == spec.objects[1].color and desc["color"] in pair.instruction


def test_diff_objects_shape_on_unoccluded_removals():
    hits = 0
    for seed in range(20):
        pair = make_removal_pair(_scene(seed, n=1), seed)
        desc, _ = diff_objects(pair.source, pair.target)
        hits += desc["shape"] == pair.subject["shape"]
    assert hits >= 18


def test_histogram_intersection_oracle():
    a = np.array([[0.05, 0.05, 0.05], [0.95, 0.05, 0.05]])
    b = np.array([[0.05, 0.05, 0.05], [0.05, 0.95, 0.05]])
    assert histogram_intersection(a, a) == 1.0
    assert histogram_intersection(a, b) == 0.5
    assert color_histogram(a).sum() == 1.0


def _pairs(canvas=32, frames=4, count=5):
    out = []
    for seed in range(count):
        spec = _scene(seed, canvas, frames)
        out.append(make_insertion_pair(spec, 0))
        out.append(make_removal_pair(spec, seed))
        out.append(make_modify_pair(spec, "subject", seed, 1))
    return out


def test_clean_pairs_accepted():
    for pair in _pairs():
        assert verify_sample(pair, extract_reference(pair)).accepted


@pytest.mark.parametrize("kind", REASONS)
def test_corruptions_rejected_with_reason(kind):
    for pair in _pairs():
        if kind in (INCOMPLETE, INPAINTING) and pair.kind not in ("insert", "remove"):
            continue
        bad, ref = corrupt(pair, extract_reference(pair), kind, seed=3)
        v = verify_sample(bad, ref)
        assert not v.accepted and kind in v.reasons, (pair.kind, v.reasons)


def test_unintended_flip_is_3x3_outside_mask():
    pair = _pairs(count=1)[0]
    bad, _ = corrupt(pair, None, UNINTENDED, seed=0)
    diff = (bad.target != pair.target).any(axis=-1)
    assert diff.sum() == 9 and not (diff & pair.edit_mask).any()
    assert verify_sample(bad).reasons == (UNINTENDED,)


def test_identity_corruption_changes_reference_only():
    pair = _pairs(count=1)[1]
    ref = extract_reference(pair)
    bad, bad_ref = corrupt(pair, ref, IDENTITY)
    assert np.array_equal(bad.source, pair.source) and not np.array_equal(bad_ref, ref)
    assert verify_sample(bad, bad_ref).reasons == (IDENTITY,)


def _cfg(**kw):
    counts = {t: 4 for t in TaskKind}
    return DatasetConfig(counts=counts, canvas=16, frames=4, **kw)


def test_build_dataset(tmp_path):
    m = build_dataset(_cfg(seed=7), tmp_path / "a")
    lines = m.read_text().splitlines()
    assert len(lines) == 20
    build_dataset(_cfg(seed=7), tmp_path / "b")
    assert dataset_digest(tmp_path / "a") == dataset_digest(tmp_path / "b")
    build_dataset(_cfg(seed=8), tmp_path / "c")
    assert dataset_digest(tmp_path / "a") != dataset_digest(tmp_path / "c")
    recs = read_manifest(m)
    tasks = [load_sample(r, tmp_path / "a").task for r in recs]
    assert all(tasks.count(t) == 4 for t in TaskKind)


def test_build_independent_of_threads(tmp_path, monkeypatch):
    cfg = DatasetConfig(counts={TaskKind.InContextEdit: 3, TaskKind.T2V: 2}, canvas=16, frames=4, seed=1)
    build_dataset(cfg, tmp_path / "one")
    monkeypatch.setenv("OMNIVID_THREADS", "3")
    build_dataset(cfg, tmp_path / "three")
    assert dataset_digest(tmp_path / "one") == dataset_digest(tmp_path / "three")


def test_rejection_guard(tmp_path, monkeypatch):
    from omnivid.datagen.verify import Verdict

    monkeypatch.setattr(build_mod, "verify_sample", lambda pair, ref=None: Verdict(False, (UNINTENDED,)))
    with pytest.raises(DatasetError):
        build_dataset(DatasetConfig(counts={TaskKind.InContextEdit: 1}, canvas=16, frames=4), tmp_path)


def test_config_file(tmp_path):
    (tmp_path / "d.kv").write_text("# desk\ncanvas = 16\nframes = 4\nT2V = 2\nseed = 3\n")
    cfg = DatasetConfig.load(tmp_path / "d.kv")
    assert cfg.canvas == 16 and cfg.counts == {TaskKind.T2V: 2} and cfg.seed == 3
    (tmp_path / "bad.kv").write_text("T2X = 2\n")
    with pytest.raises(DatasetError, match="T2X"):
        DatasetConfig.load(tmp_path / "bad.kv")


def test_palette_is_separable_from_backgrounds():
    for name in COLOR_NAMES:
        c = np.asarray(PALETTE[name])
        assert ((c <= 0.1) | (c >= 0.9)).any()
