import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from omnivid import tensorio
from omnivid.instruction import (
    Instruction, InstructionError, ManifestError, ManifestRecord, TaskKind, TaskSample, VisualRef,
    build_conditions, deserialize, infer_task, load_sample, read_manifest, serialize, validate,
    write_manifest,
)
from omnivid.codec import encode

# ref kinds -> expected task, written out independently of the implementation
FIXTURES = [
    ((), TaskKind.T2V),
    (("first_frame",), TaskKind.I2V),
    (("image",), TaskKind.I2V),
    (("first_frame", "last_frame"), TaskKind.FLF2V),
    (("last_frame", "first_frame"), TaskKind.FLF2V),
    (("video",), TaskKind.InContextEdit),
    (("image", "video"), TaskKind.InContextGen),
    (("video", "image"), TaskKind.InContextGen),
]


def _instr(kinds, text="a red disk moves", task=None):
    return Instruction(text, tuple(VisualRef(k, f"t/{i}_{k}.tomn") for i, k in enumerate(kinds)), task)


@pytest.mark.parametrize("kinds,task", FIXTURES)
def test_inference_table(kinds, task):
    assert infer_task(_instr(kinds)) is task


@pytest.mark.parametrize("kinds", [("video", "video"), ("image", "image"), ("first_frame", "video"),
                                   ("image", "first_frame", "last_frame")])
def test_outside_table_names_combination(kinds):
    with pytest.raises(InstructionError) as e:
        infer_task(_instr(kinds))
    assert any(k in str(e.value) for k in kinds)


def test_override_only_where_ambiguous():
    assert infer_task(_instr(("image", "video"), task="InContextEdit")) is TaskKind.InContextEdit
    with pytest.raises(InstructionError):
        infer_task(_instr((), task="InContextEdit"))


def test_inference_ignores_payloads():
    a = Instruction("x", (VisualRef("video", tensor=np.zeros((1, 4, 4, 3))),))
    b = Instruction("x", (VisualRef("video", "somewhere.tomn"),))
    assert infer_task(a) is infer_task(b)


def test_validate_examples():
    assert "text empty" in validate(_instr((), text=""))
    assert validate(_instr(("last_frame",)))
    assert validate(_instr(("first_frame",))) == []
    assert validate(_instr(("first_frame", "first_frame", "last_frame")))


def test_unknown_ref_kind():
    with pytest.raises(InstructionError):
        VisualRef("audio", "x")


def test_minimal_t2v_line():
    assert serialize(Instruction("a blue square")) == '{"text":"a blue square","refs":[]}'


_kinds = st.sampled_from([k for k, _ in FIXTURES])
_text = st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=30).filter(str.strip)


@given(_kinds, _text, st.booleans(), st.booleans())
def test_roundtrip(kinds, text, with_target, with_mask):
    rec = ManifestRecord(_instr(kinds, text), "t/target.tomn" if with_target else None,
                         "t/mask.tomn" if with_mask else None, {"id": "s0"})
    line = serialize(rec)
    back = deserialize(line)
    assert back == rec and back.extra == rec.extra
    assert serialize(back) == line


def test_malformed_line_number(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text('{"text":"ok","refs":[]}\n{broken\n')
    with pytest.raises(ManifestError, match="line 2"):
        read_manifest(p)
    with pytest.raises(ManifestError, match="line 7"):
        deserialize('{"refs":[]}', 7)


def test_manifest_file_roundtrip(tmp_path):
    recs = [ManifestRecord(_instr(k), "t/x.tomn") for k, _ in FIXTURES]
    write_manifest(tmp_path / "m.jsonl", recs)
    assert read_manifest(tmp_path / "m.jsonl") == recs
    first = json.loads((tmp_path / "m.jsonl").read_text().splitlines()[1])
    assert list(first) == ["text", "refs", "target_path"]


def test_missing_tensor_names_path(tmp_path):
    rec = ManifestRecord(_instr(("video",)), "t/target.tomn")
    with pytest.raises(FileNotFoundError, match="target.tomn"):
        load_sample(rec, tmp_path)


def test_build_conditions_roles_and_alignment():
    frame = np.zeros((16, 16, 3), np.float32)
    video = np.zeros((4, 16, 16, 3), np.float32)
    refs = [VisualRef("first_frame", "a"), VisualRef("last_frame", "b")]
    first, last = build_conditions(TaskKind.FLF2V, refs, [frame, frame], 4)
    assert first.role == "first_frame" and first.validity.tolist() == [True, False, False, False]
    assert last.role == "last_frame" and last.validity.tolist() == [False, False, False, True]
    img, vid = build_conditions(TaskKind.InContextGen, [VisualRef("image", "a"), VisualRef("video", "b")],
                                [frame, video], 4)
    assert img.role == "reference_image" and img.frames == 1
    assert vid.role == "condition_video" and vid.frames == 4
    (lone,) = build_conditions(TaskKind.I2V, [VisualRef("image", "a")], [frame], 4)
    assert lone.role == "first_frame" and lone.frames == 4


def test_task_sample_mask_rules():
    tgt = encode(np.zeros((4, 16, 16, 3)))
    edit = _instr(("video",))
    with pytest.raises(InstructionError, match="requires an edit mask"):
        TaskSample(edit, TaskKind.InContextEdit, (), tgt)
    with pytest.raises(InstructionError, match="does not match"):
        TaskSample(edit, TaskKind.InContextEdit, (), tgt, np.zeros((4, 8, 8), bool))
    with pytest.raises(InstructionError):
        TaskSample(_instr(()), TaskKind.T2V, (), tgt, np.zeros((4, 16, 16), bool))
    TaskSample(edit, TaskKind.InContextEdit, (), tgt, np.zeros((4, 16, 16), bool))


def test_load_sample_from_dataset(tiny_dataset):
    recs = read_manifest(tiny_dataset / "manifest.jsonl")
    for rec in recs:
        s = load_sample(rec, tiny_dataset)
        assert s.task is infer_task(rec.instruction)
        assert s.target.shape == (4, 4, 4, 48)
        if s.task is TaskKind.FLF2V:
            target = tensorio.load(tiny_dataset / rec.target_path)
            first, last = (r.resolve(tiny_dataset) for r in rec.instruction.refs)
            assert np.array_equal(first, target[0]) and np.array_equal(last, target[-1])
