import numpy as np
import pytest
from hypothesis import settings

from stream_ttt.models import NeuralModel, NeuralModelSpec, QuadModelSpec, QuadraticModel
from stream_ttt.streamgen import StreamSpec, gen_shape_stills, gen_stream
from stream_ttt.models import joint_train, TrainConfig

settings.register_profile("repo", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def tiny_neural():
    """An 8x8 patch network small enough for coordinate-wise gradient checks."""
    return NeuralModel(NeuralModelSpec(height=8, width=8, patch_size=2, hidden_dim=4))


@pytest.fixture(scope="session")
def tiny_trained(tiny_neural):
    data = gen_shape_stills(64, tiny_neural.spec.shape, seed=3, radius=1)
    return joint_train(tiny_neural, data, seed=3, config=TrainConfig(epochs=20))


@pytest.fixture(scope="session")
def tiny_video(tiny_neural):
    spec = StreamSpec("shape-video", T=40, dims=(8, 8), eta=3.0, regime_times=(20,), seed=5,
                      radius=1, bg_range=(0.0, 0.9))
    return gen_stream(spec)


@pytest.fixture(scope="session")
def quad_model():
    return QuadraticModel(QuadModelSpec.isotropic(alpha=1.0, beta=1.0, d=4, sigma=0.5))


def random_neural_state(model, rng, scale=0.5):
    """A state with every block (including biases and template) randomized."""
    from stream_ttt.models import ModelState

    sf, sg, sh = model.block_sizes()
    return ModelState(rng.normal(0, scale, sf), rng.normal(0, scale, sg),
                      rng.normal(0, scale, sh)).freeze()
