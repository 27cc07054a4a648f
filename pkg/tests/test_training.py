import numpy as np
import pytest

from stream_ttt.models import (NeuralModel, NeuralModelSpec, QuadModelSpec, QuadraticModel,
                               TrainConfig, TrainingDivergedError, build_model, joint_objective,
                               joint_train, load_checkpoint, save_checkpoint)
from stream_ttt.streamgen import gen_latent_training_set, gen_shape_stills

SMALL = NeuralModelSpec(height=8, width=8, patch_size=2, hidden_dim=6)


@pytest.fixture(scope="module")
def stills():
    return gen_shape_stills(64, SMALL.shape, seed=1, radius=1)


def test_zero_epochs_returns_the_initialization(stills):
    model = NeuralModel(SMALL)
    state = joint_train(model, stills, epochs=0, seed=4)
    init = model.init_state(4)
    for a, b in zip(state.frozen_init, (init.f, init.g, init.h)):
        np.testing.assert_array_equal(a, b)


def test_training_lowers_the_objective(stills):
    model = NeuralModel(SMALL)
    cfg = TrainConfig(epochs=15)
    before = joint_objective(model, model.init_state(0), stills, seed=9, config=cfg)
    state = joint_train(model, stills, seed=0, config=cfg)
    after = joint_objective(model, state, stills, seed=9, config=cfg)
    assert after < 0.75 * before


def test_deterministic_in_seed(stills):
    model = NeuralModel(SMALL)
    a = joint_train(model, stills, epochs=2, seed=3)
    b = joint_train(model, stills, epochs=2, seed=3)
    c = joint_train(model, stills, epochs=2, seed=4)
    assert a.checksum() == b.checksum() != c.checksum()


def test_zero_ssl_weight_leaves_reconstruction_head_untouched(stills):
    # "main task only": the self-supervised head gets no signal
    model = NeuralModel(SMALL)
    cfg = TrainConfig(epochs=3, ssl_weight=0.0)
    state = joint_train(model, stills, seed=2, config=cfg)
    np.testing.assert_array_equal(state.g, model.init_state(2).g)
    assert not np.array_equal(state.h, model.init_state(2).h)


def test_zero_main_weight_leaves_main_head_untouched(stills):
    model = NeuralModel(SMALL)
    state = joint_train(model, stills, seed=2, config=TrainConfig(epochs=3, main_weight=0.0))
    np.testing.assert_array_equal(state.h, model.init_state(2).h)


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_divergence_is_detected(stills):
    model = NeuralModel(SMALL)
    with pytest.raises(TrainingDivergedError):
        joint_train(model, stills, seed=0, config=TrainConfig(epochs=20, lr=1e6, momentum=0.0))


def test_state_is_frozen_and_read_only(stills):
    state = joint_train(NeuralModel(SMALL), stills, epochs=1, seed=0)
    assert state.frozen_init is not None
    with pytest.raises(ValueError):
        state.f[0] = 1.0
    with pytest.raises(ValueError):
        state.frozen_init[0][0] = 1.0


def test_quadratic_training_reaches_the_target_map():
    spec = QuadModelSpec.isotropic(1.0, 1.0, 4, sigma=0.0)
    data = gen_latent_training_set(256, spec.W, seed=0)
    state = joint_train(QuadraticModel(spec), data, seed=0,
                        config=TrainConfig(epochs=30, lr=0.05))
    # with W = I the best constant theta is the (doubled-loss) mean of W x
    np.testing.assert_allclose(state.f, data.X.mean(0), atol=0.05)


def test_rejects_empty_training_set():
    class Empty:
        X = np.zeros((0, 64))
        Y = np.zeros((0, 64))

        def __len__(self):
            return 0

    with pytest.raises(ValueError):
        joint_train(NeuralModel(SMALL), Empty(), epochs=1)


@pytest.mark.parametrize("family", ["neural", "quadratic"])
def test_checkpoint_round_trip_is_exact(tmp_path, family):
    if family == "neural":
        model = NeuralModel(SMALL)
        state = model.init_state(5).freeze()
    else:
        model = QuadraticModel(QuadModelSpec(0.7, np.random.default_rng(0).normal(size=(3, 3)), 0.4))
        state = model.init_state(5).freeze()
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, state)
    loaded_model, loaded = load_checkpoint(path)
    assert loaded.init_checksum() == state.init_checksum()
    assert loaded_model.spec_dict() == model.spec_dict()
    assert loaded.param_count == state.param_count


def test_checkpoint_rejects_truncation(tmp_path):
    model = NeuralModel(SMALL)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, model.init_state(0).freeze())
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(ValueError):
        load_checkpoint(path)
    with pytest.raises(ValueError):
        build_model("transformer", {})
