"""Procedural paired-data pipeline over synthetic moving-shape videos."""

from .build import DatasetConfig, DatasetError, build_dataset, build_one, dataset_digest
from .pairs import (
    EDIT_KINDS, N_STYLES, STYLES, EditPair, PairError, apply_style, diff_objects, edge_map,
    extract_reference, make_insertion_pair, make_modify_pair, make_removal_pair, make_style_pair,
)
from .scene import SceneObject, SceneSpec, describe_scene, random_scene, render
from .verify import REASONS, Verdict, corrupt, verify_sample
