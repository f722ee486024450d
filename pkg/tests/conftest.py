import numpy as np
import pytest

from classes.data_classes import ModelConfig
from utils.log import set_log_dir, get_log_dir


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow training tests')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def log_to_tmp(tmp_path):
    """Keep log.log out of the repository."""
    previous = get_log_dir()
    set_log_dir(str(tmp_path / 'log'))
    yield
    set_log_dir(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


GRADIENT_SEEDS = (1234, 7, 2024)


@pytest.fixture(params=GRADIENT_SEEDS, ids=lambda seed: f'seed{seed}')
def grad_rng(request):
    """Generator for gradient checks, one run per seed."""
    return np.random.default_rng(request.param)


TINY_MODEL = {
    'base_channels': 4,
    'blocks_per_stage': [1, 1, 1, 1],
    'heads_per_stage': [1, 1, 2, 2],
    'experts': 4,
    'top_k': 2,
    'prior': {'d_f': 4},
}

TINY_CONFIG_TEXT = """# tiny network for fast tests
base_channels = 4
blocks_per_stage = 1,1,1,1
heads_per_stage = 1,1,2,2
experts = 4
top_k = 2
prior_d_f = 4

crop = 32
batch = 1
steps = 2
warmup_steps = 1
checkpoint_every = 1
manifest = data/manifest.txt
"""


@pytest.fixture
def tiny_cfg():
    return ModelConfig(TINY_MODEL).validate()


def weighted_sum(out, weights):
    """Scalar test objective sum(out * weights)."""
    from engine import ops
    return ops.reduce_sum(ops.mul(out, weights))


def scramble(group, rng, std=0.5):
    """Replaces every parameter below `group` with N(0, std^2) values so gradients are not vanishingly small."""
    for parameter in group.named_parameters():
        tensor = parameter.tensor
        tensor.data = (rng.standard_normal(tensor.shape) * std).astype(np.float32)
