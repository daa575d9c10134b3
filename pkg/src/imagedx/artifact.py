"""Trained-model artifacts: persistence, integrity checks, and inference.

Artifact directory layout (schema_version 1)::

    model_dir/
      manifest.json   # config, catalog snapshot, preprocess snapshot,
                      # metadata, and the sha256 of weights.npz
      weights.npz     # all parameters and batch-norm running statistics

The manifest hash guards against mixing a manifest with foreign weights.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from imagedx.densenet import DenseNetConfig, DenseNetNetwork, ModelSpec, build_model
from imagedx.errors import ArtifactError, ShapeMismatch
from imagedx.labels import CATALOG_LABEL_STRINGS, HierarchicalLabel, parse_label
from imagedx.nn.layers import softmax
from imagedx.preprocessing import ImageTensor, PreprocessConfig

SCHEMA_VERSION = 1

MANIFEST_FILE = "manifest.json"
WEIGHTS_FILE = "weights.npz"


@dataclass
class ClassProbabilities:
    """Probability vector in catalog class order."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 1:
            raise ShapeMismatch("probabilities must be a vector")
        if (self.probs < 0).any() or abs(float(self.probs.sum()) - 1.0) > 1e-5:
            raise ShapeMismatch("probabilities must be nonnegative and sum to 1")

    def __len__(self) -> int:
        return len(self.probs)

    def __getitem__(self, index: int) -> float:
        return float(self.probs[index])


@dataclass
class TrainedModel:
    config: DenseNetConfig
    network: DenseNetNetwork
    catalog_strings: tuple[str, ...]
    preprocess: PreprocessConfig
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.catalog_strings) != self.config.num_classes:
            raise ArtifactError(
                f"catalog snapshot has {len(self.catalog_strings)} entries but the "
                f"model head is {self.config.num_classes} wide"
            )

    @property
    def spec(self) -> ModelSpec:
        return build_model(self.config)

    def label_at(self, index: int) -> HierarchicalLabel:
        return parse_label(self.catalog_strings[index])


def predict_logits(model: TrainedModel, batch: np.ndarray) -> np.ndarray:
    """Eval-mode forward over a prepared (N, 3, H, W) batch."""
    return model.network.forward(batch, training=False)


def predict(model: TrainedModel, image: ImageTensor) -> ClassProbabilities:
    """Class probabilities for one preprocessed image (deterministic)."""
    expected = (model.preprocess.target_height, model.preprocess.target_width, 3)
    if image.values.shape != expected:
        raise ShapeMismatch(
            f"image shape {image.values.shape} does not match the model's "
            f"preprocess target {expected}"
        )
    x = image.values.transpose(2, 0, 1)[None].astype(np.float32)
    logits = predict_logits(model, x)[0]
    return ClassProbabilities(softmax(logits.astype(np.float64)))


def predict_label(
    model: TrainedModel, image: ImageTensor
) -> tuple[HierarchicalLabel, float]:
    """Most probable catalog label and its confidence.

    Ties break toward the lowest class index (argmax-first semantics).
    """
    probabilities = predict(model, image)
    index = int(np.argmax(probabilities.probs))
    return model.label_at(index), float(probabilities.probs[index])


def _weights_bytes(model: TrainedModel) -> bytes:
    buffer = io.BytesIO()
    state = model.network.named_state()
    np.savez(buffer, **state)
    return buffer.getvalue()


def save_model(model: TrainedModel, directory: Path | str) -> Path:
    """Write the artifact directory; returns its path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    payload = _weights_bytes(model)
    digest = hashlib.sha256(payload).hexdigest()
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config": model.config.to_dict(),
        "catalog": list(model.catalog_strings),
        "preprocess": model.preprocess.to_dict(),
        "metadata": model.metadata,
        "weights_sha256": digest,
    }
    (directory / WEIGHTS_FILE).write_bytes(payload)
    (directory / MANIFEST_FILE).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return directory


def load_model(directory: Path | str) -> TrainedModel:
    """Load and integrity-check an artifact directory."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_FILE
    weights_path = directory / WEIGHTS_FILE
    if not manifest_path.is_file() or not weights_path.is_file():
        raise ArtifactError(f"{directory} is not a model artifact directory")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"corrupt manifest: {exc}") from exc
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise ArtifactError(
            f"unsupported artifact schema {manifest.get('schema_version')!r}"
        )
    payload = weights_path.read_bytes()
    digest = hashlib.sha256(payload).hexdigest()
    if digest != manifest.get("weights_sha256"):
        raise ArtifactError(
            "weights hash mismatch: artifact files do not belong together"
        )
    config = DenseNetConfig.from_dict(manifest["config"])
    network = DenseNetNetwork(config, rng=np.random.default_rng(0))
    with np.load(io.BytesIO(payload)) as archive:
        state = {key: archive[key] for key in archive.files}
    try:
        network.load_state(state)
    except KeyError as exc:
        raise ArtifactError(f"weights missing entry {exc}") from exc
    return TrainedModel(
        config=config,
        network=network,
        catalog_strings=tuple(manifest["catalog"]),
        preprocess=PreprocessConfig.from_dict(manifest["preprocess"]),
        metadata=manifest.get("metadata", {}),
    )


def artifact_id(directory: Path | str) -> str:
    """Stable identifier for a stored artifact (weights hash prefix)."""
    manifest_path = Path(directory) / MANIFEST_FILE
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        return str(manifest["weights_sha256"])[:16]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ArtifactError(f"cannot read artifact id from {directory}: {exc}") from exc


def default_catalog_strings() -> tuple[str, ...]:
    return CATALOG_LABEL_STRINGS
