import numpy as np
import pytest

from idfalign.cascade import CascadeConfig, train_cascade
from idfalign.shape_init import build_init_set
from idfalign.synthetic import SyntheticConfig, generate_synthetic


def tiny_dataset(count=16, landmarks=10, seed=5, size=64):
    return generate_synthetic(
        SyntheticConfig(count=count, landmark_count=landmarks, image_size=size, seed=seed)
    )


def tiny_config(**overrides):
    defaults = dict(
        stages=2,
        landmarks=10,
        trees_per_forest=3,
        depth=4,
        candidates_per_landmark=60,
        min_samples_per_node=3,
        seed=9,
    )
    defaults.update(overrides)
    return CascadeConfig(**defaults)


def train_tiny(samples=None, config=None, **train_kwargs):
    if samples is None:
        samples = tiny_dataset()
    if config is None:
        config = tiny_config()
    rng = np.random.default_rng(0)
    init_set = build_init_set(
        [s.shape for s in samples], [s.box for s in samples], n_clusters=3, count=5, rng=rng
    )
    model, errors = train_cascade(samples, init_set, config, **train_kwargs)
    return samples, init_set, model, errors


@pytest.fixture(scope="session")
def tiny_trained():
    """A small trained cascade shared by tests that only read from it."""
    return train_tiny()
