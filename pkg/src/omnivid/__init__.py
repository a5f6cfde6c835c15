"""Desk-scale unified video generation and editing.

One instruction format, five tasks (T2V, I2V, FLF2V, in-context generation,
in-context editing), a diffusion transformer with offset 3D rotary positions,
and a procedural paired-data pipeline.
"""

from .codec import LatentGrid, concat_conditions, decode, encode, unify_temporal_shape
from .dit import ModelConfig, OmniModel, euler_sample, sample
from .instruction import Instruction, TaskKind, VisualRef, infer_task
from .rope import Offset3, RopeConfig, apply_rope, offset_policy
from .trainer import StagePlan, TrainState, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"
