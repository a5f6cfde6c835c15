"""
3D rotary positions and per-task offsets
========================================

Each latent token has a (t, h, w) position. Condition tokens are moved by a
task-dependent offset so they never share a position with target tokens:
a reference video is shifted past the target's width, a reference image past
its last frame.
"""

import numpy as np

from omnivid.instruction import TaskKind
from omnivid.rope import RopeConfig, angles, apply_rope, offset_policy, policy_table, position_array

target_shape = (4, 2, 3)
for task, role in policy_table():
    print(f"{task.value:>14} {role:<16} offset {tuple(offset_policy(task, role, target_shape))}")

# %%
# The edit condition sits to the right of the target along the width axis.

off = offset_policy(TaskKind.InContextEdit, "condition_video", target_shape)
cond = position_array(4, 2, 3, off)
tgt = position_array(4, 2, 3)
print("condition w range", cond[:, 2].min(), cond[:, 2].max(), "| target w range", tgt[:, 2].min(), tgt[:, 2].max())

# %%
# Rotations only see relative displacement: shifting both positions by the
# same amount leaves the query-key dot product unchanged.

cfg = RopeConfig()
rng = np.random.default_rng(1)
q, k = rng.standard_normal(32), rng.standard_normal(32)
p1, p2, shift = np.array([0, 1, 2]), np.array([3, 0, 1]), np.array([5, 0, 3])
before = apply_rope(q, angles(p1, cfg)) @ apply_rope(k, angles(p2, cfg))
after = apply_rope(q, angles(p1 + shift, cfg)) @ apply_rope(k, angles(p2 + shift, cfg))
print(f"dot before shift {before:.12f}, after {after:.12f}")
