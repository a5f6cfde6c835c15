import numpy as np
import pytest
import torch
from hypothesis import settings

from omnivid.datagen import DatasetConfig, build_dataset
from omnivid.instruction import TaskKind

settings.register_profile("omnivid", deadline=None, max_examples=50)
settings.load_profile("omnivid")

torch.set_num_threads(1)


def random_video(rng, frames=4, size=16):
    return rng.random((frames, size, size, 3), dtype=np.float32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """One verified sample per task (two for the editing tasks), 16x16x4."""
    root = tmp_path_factory.mktemp("tiny_ds")
    counts = {t: 1 for t in TaskKind}
    counts[TaskKind.InContextEdit] = 2
    counts[TaskKind.InContextGen] = 2
    build_dataset(DatasetConfig(counts=counts, canvas=16, frames=4, seed=3), root)
    return root


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training test")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
