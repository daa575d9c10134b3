import math

import numpy as np
import pytest

from imagedx.artifact import ClassProbabilities
from imagedx.dataset import DatasetManifest
from imagedx.densenet import DenseNetConfig
from imagedx.errors import EmptyDataset, NonFiniteLoss
from imagedx.fixtures import generate_overfit_fixture
from imagedx.nn.layers import Parameter
from imagedx.preprocessing import PreprocessConfig
from imagedx.training import Adam, TrainingConfig, cross_entropy_loss, train

TINY_MODEL = DenseNetConfig(
    block_layer_counts=(1, 1, 1, 1),
    growth_rate=8,
    initial_channels=16,
    num_classes=25,
    input_shape=(32, 32, 3),
    bottleneck_factor=2,
)

PREPROCESS_32 = PreprocessConfig(target_height=32, target_width=32)


def test_cross_entropy_one_hot_correct():
    probs = np.zeros(25)
    probs[7] = 1.0
    assert cross_entropy_loss(ClassProbabilities(probs), 7) == 0.0


def test_cross_entropy_uniform_is_log_k():
    probs = np.full(25, 1.0 / 25.0)
    # closed form: -ln(1/25) = ln 25
    assert cross_entropy_loss(ClassProbabilities(probs), 3) == pytest.approx(
        math.log(25), abs=1e-12
    )
    assert math.log(25) == pytest.approx(3.2189, abs=1e-4)


def test_cross_entropy_clamps_zero_probability():
    probs = np.zeros(25)
    probs[0] = 1.0
    loss = cross_entropy_loss(ClassProbabilities(probs), 5)
    assert loss == pytest.approx(-math.log(1e-12), abs=1e-9)
    assert loss == pytest.approx(27.631021, abs=1e-5)
    assert math.isfinite(loss)


def test_cross_entropy_index_error():
    probs = np.full(25, 1.0 / 25.0)
    with pytest.raises(IndexError):
        cross_entropy_loss(ClassProbabilities(probs), 25)
    with pytest.raises(IndexError):
        cross_entropy_loss(ClassProbabilities(probs), -1)


def test_cross_entropy_monotone_in_true_probability():
    losses = []
    for p in (0.1, 0.3, 0.6, 0.9):
        probs = np.full(25, (1 - p) / 24.0)
        probs[4] = p
        losses.append(cross_entropy_loss(ClassProbabilities(probs), 4))
    assert losses == sorted(losses, reverse=True)


def test_adam_single_step_reference():
    # one Adam step on g = [1, -2]: update is lr * ghat / (|ghat| + eps)
    param = Parameter(np.array([1.0, 1.0]))
    param.grad[:] = np.array([1.0, -2.0])
    opt = Adam([param], learning_rate=0.1)
    opt.step()
    # bias-corrected mhat = g, vhat = g^2 -> step = lr * sign(g) (eps negligible)
    assert param.value[0] == pytest.approx(1.0 - 0.1, abs=1e-6)
    assert param.value[1] == pytest.approx(1.0 + 0.1, abs=1e-6)


def test_adam_converges_on_quadratic():
    # minimize (x - 3)^2 by hand-fed gradients
    param = Parameter(np.array([0.0]))
    opt = Adam([param], learning_rate=0.1)
    for _ in range(500):
        param.grad[:] = 2 * (param.value - 3.0)
        opt.step()
    assert param.value[0] == pytest.approx(3.0, abs=1e-3)


def test_training_config_validation():
    with pytest.raises(ValueError):
        TrainingConfig(optimizer="sgd")
    with pytest.raises(ValueError):
        TrainingConfig(loss="hinge")
    with pytest.raises(ValueError):
        TrainingConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainingConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainingConfig(epochs=0)


def test_training_defaults_match_published_hyperparameters():
    cfg = TrainingConfig()
    assert cfg.optimizer == "adam"
    assert cfg.loss == "cross-entropy"
    assert cfg.batch_size == 16
    assert cfg.learning_rate == 0.0001
    assert cfg.epochs == 100


def test_train_empty_dataset(tmp_path):
    manifest = DatasetManifest(entries=[], root=tmp_path)
    with pytest.raises(EmptyDataset):
        train(TINY_MODEL, manifest, TrainingConfig(epochs=1), PREPROCESS_32)


@pytest.fixture(scope="module")
def small_fixture(tmp_path_factory):
    root = tmp_path_factory.mktemp("overfit")
    return generate_overfit_fixture(root, per_class=1, image_size=32, seed=7)


def test_seeded_training_is_deterministic(small_fixture):
    tcfg = TrainingConfig(epochs=2, seed=11, learning_rate=0.001)
    _, history_a = train(TINY_MODEL, small_fixture, tcfg, PREPROCESS_32)
    _, history_b = train(TINY_MODEL, small_fixture, tcfg, PREPROCESS_32)
    assert abs(history_a.epochs[0].train_loss - history_b.epochs[0].train_loss) < 1e-6
    assert history_a.epochs[0].train_loss == history_b.epochs[0].train_loss


def test_metadata_records_hyperparameters(small_fixture):
    tcfg = TrainingConfig(epochs=1, seed=3)
    model, history = train(TINY_MODEL, small_fixture, tcfg, PREPROCESS_32)
    md = model.metadata
    assert md["optimizer"] == "adam"
    assert md["loss"] == "cross-entropy"
    assert md["batch_size"] == 16
    assert md["learning_rate"] == 0.0001
    assert md["epochs"] == 1
    assert md["epochs_completed"] == 1
    assert md["seed"] == 3
    assert len(history) == 1
    assert history.final().val_loss is None  # train-only fixture


def test_non_finite_loss_aborts(small_fixture):
    # an absurd learning rate drives parameters to overflow within a few steps
    tcfg = TrainingConfig(epochs=50, seed=0, learning_rate=1e30)
    with np.errstate(all="ignore"):
        with pytest.raises(NonFiniteLoss):
            train(TINY_MODEL, small_fixture, tcfg, PREPROCESS_32)


def test_history_tsv_shape(small_fixture):
    tcfg = TrainingConfig(epochs=2, seed=5, learning_rate=0.001)
    _, history = train(TINY_MODEL, small_fixture, tcfg, PREPROCESS_32)
    tsv = history.to_tsv()
    lines = tsv.strip().splitlines()
    assert lines[0].startswith("epoch\t")
    assert len(lines) == 3
