"""
Latent grids and condition alignment
====================================

The codec is a lossless space-to-depth rearrangement: every 4x4 pixel patch
becomes one 48-channel latent cell. Conditions shorter than the target are
zero-padded in time and the padding is marked invalid.
"""

import numpy as np

from omnivid.codec import concat_conditions, decode, encode, unify_temporal_shape

rng = np.random.default_rng(0)
video = rng.random((4, 16, 16, 3), dtype=np.float32)

grid = encode(video)
print("video", video.shape, "-> latent", grid.shape)
print("round trip bitwise:", decode(grid).tobytes() == video.tobytes())

# %%
# A first frame is one latent frame; aligning it to a 4-frame target puts it
# at t=0 and flags the rest as padding. A last frame goes to the back.

first = unify_temporal_shape(encode(video[0], role="first_frame"), 4, "front")
last = unify_temporal_shape(encode(video[-1], role="last_frame"), 4, "back")
print("first_frame validity", first.validity)
print("last_frame validity ", last.validity)

# %%
# Conditions are joined along time; the segment list remembers which frames
# belong to which role.

joined, segments = concat_conditions([first, last])
print("joined", joined.shape, "segments", segments)
