"""
One instruction format, five tasks
==================================

The task is never stated explicitly: it follows from which visual references
accompany the text.
"""

from omnivid.instruction import Instruction, ManifestRecord, VisualRef, deserialize, infer_task, serialize

cases = {
    "text only": (),
    "first frame": ("first_frame",),
    "first and last frame": ("first_frame", "last_frame"),
    "reference video": ("video",),
    "image and video": ("image", "video"),
}
for label, kinds in cases.items():
    instr = Instruction("a red disk bounces", tuple(VisualRef(k, f"{k}.tomn") for k in kinds))
    print(f"{label:<22} -> {infer_task(instr).value}")

# %%
# Image + video is ambiguous between generation and editing; an explicit
# override settles it.

edit = Instruction("put the cat in", (VisualRef("image", "i.tomn"), VisualRef("video", "v.tomn")), "InContextEdit")
print("with override:", infer_task(edit).value)

# %%
# Manifest lines are compact JSON and round-trip exactly.

line = serialize(ManifestRecord(edit, "target.tomn", "mask.tomn", {"id": "demo"}))
print(line)
print("round trip:", serialize(deserialize(line)) == line)
