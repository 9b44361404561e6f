import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fedaudit import ArchSpec, TrainConfig, init_params, synth_dataset


@pytest.fixture
def tiny_arch():
    return ArchSpec.build(8, 3, [(2, 3, 2)], [4])


@pytest.fixture
def tiny_params(tiny_arch):
    return init_params(tiny_arch, 7)


@pytest.fixture
def small_ds():
    return synth_dataset(3, 20, 8, 0.2, 0)


@pytest.fixture
def fast_hyper():
    return TrainConfig(epochs=3, lr=0.05, batch_size=16)
