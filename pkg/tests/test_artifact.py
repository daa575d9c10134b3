import json

import numpy as np
import pytest

from imagedx.artifact import (
    ClassProbabilities,
    TrainedModel,
    artifact_id,
    load_model,
    predict,
    predict_label,
    predict_logits,
    save_model,
)
from imagedx.densenet import DenseNetConfig, DenseNetNetwork
from imagedx.errors import ArtifactError, ShapeMismatch
from imagedx.labels import catalog
from imagedx.preprocessing import ImageTensor, PreprocessConfig

TINY = DenseNetConfig(
    block_layer_counts=(1, 1, 1, 1),
    growth_rate=8,
    initial_channels=16,
    num_classes=25,
    input_shape=(32, 32, 3),
    bottleneck_factor=2,
)

PP32 = PreprocessConfig(target_height=32, target_width=32)


@pytest.fixture()
def model():
    network = DenseNetNetwork(TINY, rng=np.random.default_rng(42))
    return TrainedModel(
        config=TINY,
        network=network,
        catalog_strings=catalog().strings(),
        preprocess=PP32,
        metadata={"optimizer": "adam", "seed": 42},
    )


def _random_image(seed=0):
    rng = np.random.default_rng(seed)
    return ImageTensor(rng.standard_normal((32, 32, 3)).astype(np.float32))


def test_predict_contract(model):
    image = _random_image()
    probs = predict(model, image)
    assert len(probs) == 25
    assert (probs.probs >= 0).all()
    assert abs(probs.probs.sum() - 1.0) < 1e-5


def test_predict_deterministic(model):
    image = _random_image(1)
    a = predict(model, image)
    b = predict(model, image)
    assert np.array_equal(a.probs, b.probs)


def test_predict_shape_mismatch(model):
    bad = ImageTensor(np.zeros((64, 64, 3), dtype=np.float32))
    with pytest.raises(ShapeMismatch):
        predict(model, bad)


def test_predict_label_argmax_and_confidence(model):
    image = _random_image(2)
    probs = predict(model, image)
    label, confidence = predict_label(model, image)
    idx = int(np.argmax(probs.probs))
    assert label == catalog().label_at(idx)
    assert confidence == pytest.approx(float(probs.probs.max()))


def test_tie_breaks_to_lowest_index():
    probs = np.zeros(25)
    probs[3] = probs[7] = 0.5
    assert int(np.argmax(probs)) == 3  # numpy argmax takes the first maximum


def test_class_probabilities_validation():
    with pytest.raises(ShapeMismatch):
        ClassProbabilities(np.full(25, 0.1))  # sums to 2.5
    with pytest.raises(ShapeMismatch):
        bad = np.full(25, 1.0 / 25)
        bad[0] = -bad[0]
        ClassProbabilities(bad)


def test_save_load_identical_predictions(model, tmp_path):
    save_model(model, tmp_path / "artifact")
    loaded = load_model(tmp_path / "artifact")

    rng = np.random.default_rng(9)
    probe = rng.standard_normal((16, 3, 32, 32)).astype(np.float32)
    original = predict_logits(model, probe)
    restored = predict_logits(loaded, probe)
    assert np.abs(original - restored).max() <= 1e-6
    assert loaded.metadata["seed"] == 42
    assert loaded.catalog_strings == model.catalog_strings
    assert loaded.preprocess == model.preprocess


def test_artifact_hash_guard(model, tmp_path):
    directory = save_model(model, tmp_path / "artifact")
    weights = directory / "weights.npz"
    data = bytearray(weights.read_bytes())
    data[100] ^= 0xFF
    weights.write_bytes(bytes(data))
    with pytest.raises(ArtifactError, match="hash"):
        load_model(directory)


def test_artifact_schema_guard(model, tmp_path):
    directory = save_model(model, tmp_path / "artifact")
    manifest_path = directory / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["schema_version"] = 99
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(ArtifactError, match="schema"):
        load_model(directory)


def test_load_missing_directory(tmp_path):
    with pytest.raises(ArtifactError):
        load_model(tmp_path / "nope")


def test_artifact_id_stable(model, tmp_path):
    directory = save_model(model, tmp_path / "artifact")
    first = artifact_id(directory)
    assert first == artifact_id(directory)
    assert len(first) == 16


def test_catalog_snapshot_must_match_head_width():
    network = DenseNetNetwork(TINY, rng=np.random.default_rng(0))
    with pytest.raises(ArtifactError):
        TrainedModel(
            config=TINY,
            network=network,
            catalog_strings=("a.b.c.d",),
            preprocess=PP32,
        )
