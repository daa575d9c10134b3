"""Model training: Adam optimization of the classifier with categorical
cross-entropy, per-epoch shuffling, and best-by-validation-loss
checkpointing."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from imagedx.artifact import TrainedModel, save_model
from imagedx.dataset import DatasetManifest, load_sample
from imagedx.densenet import DenseNetConfig, DenseNetNetwork
from imagedx.errors import DiskError, EmptyDataset, NonFiniteLoss, UnknownLabel
from imagedx.labels import catalog, format_label
from imagedx.nn.layers import PROB_FLOOR, Parameter, softmax_cross_entropy
from imagedx.preprocessing import PreprocessConfig

SUPPORTED_OPTIMIZERS = ("adam",)
SUPPORTED_LOSSES = ("cross-entropy",)


@dataclass(frozen=True)
class TrainingConfig:
    optimizer: str = "adam"
    loss: str = "cross-entropy"
    learning_rate: float = 0.0001
    batch_size: int = 16
    epochs: int = 100
    seed: int = 0
    patience: int | None = None
    checkpoint_dir: Path | None = None

    def __post_init__(self) -> None:
        if self.optimizer not in SUPPORTED_OPTIMIZERS:
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if self.loss not in SUPPORTED_LOSSES:
            raise ValueError(f"unsupported loss {self.loss!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 when set")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float | None
    val_accuracy: float | None
    seconds: float


@dataclass
class TrainingHistory:
    epochs: list[EpochStats] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.epochs)

    def final(self) -> EpochStats:
        return self.epochs[-1]

    def to_tsv(self) -> str:
        lines = ["epoch\ttrain_loss\ttrain_accuracy\tval_loss\tval_accuracy\tseconds"]
        for e in self.epochs:
            val_loss = "" if e.val_loss is None else f"{e.val_loss:.6f}"
            val_acc = "" if e.val_accuracy is None else f"{e.val_accuracy:.6f}"
            lines.append(
                f"{e.epoch}\t{e.train_loss:.6f}\t{e.train_accuracy:.6f}"
                f"\t{val_loss}\t{val_acc}\t{e.seconds:.3f}"
            )
        return "\n".join(lines) + "\n"


class Adam:
    """Adam optimizer with bias correction."""

    def __init__(
        self,
        params: list[Parameter],
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.value) for p in params]
        self._v = [np.zeros_like(p.value) for p in params]

    def step(self) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            mhat = m / correction1
            vhat = v / correction2
            p.value -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def cross_entropy_loss(probs, true_class: int) -> float:
    """-ln of the predicted probability of the true class.

    The probability is clamped to >= 1e-12 before the log so the loss is
    always finite.
    """
    values = getattr(probs, "probs", probs)
    values = np.asarray(values, dtype=np.float64)
    if not 0 <= true_class < values.shape[-1]:
        raise IndexError(
            f"true_class {true_class} outside 0..{values.shape[-1] - 1}"
        )
    return float(-math.log(max(float(values[true_class]), PROB_FLOOR)))


def _load_split(
    manifest: DatasetManifest, split: str, preprocess: PreprocessConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Decode a split into (N, 3, H, W) float32 inputs and class indices."""
    cat = catalog()
    entries = manifest.split_entries(split)
    images = np.empty(
        (len(entries), 3, preprocess.target_height, preprocess.target_width),
        dtype=np.float32,
    )
    targets = np.empty(len(entries), dtype=np.int64)
    for i, entry in enumerate(entries):
        if entry.label not in cat:
            raise UnknownLabel(f"label {format_label(entry.label)} not in catalog")
        tensor = load_sample(entry, preprocess)
        images[i] = tensor.values.transpose(2, 0, 1)
        targets[i] = cat.index_of(entry.label)
    return images, targets


def _eval_pass(
    network: DenseNetNetwork, images: np.ndarray, targets: np.ndarray, batch_size: int
) -> tuple[float, float]:
    total_loss = 0.0
    correct = 0
    for start in range(0, len(images), batch_size):
        x = images[start : start + batch_size]
        y = targets[start : start + batch_size]
        logits = network.forward(x, training=False)
        loss, _, probs = softmax_cross_entropy(logits, y)
        total_loss += loss * len(x)
        correct += int((probs.argmax(axis=1) == y).sum())
    return total_loss / len(images), correct / len(images)


def train(
    model_cfg: DenseNetConfig,
    manifest: DatasetManifest,
    tcfg: TrainingConfig,
    preprocess: PreprocessConfig | None = None,
) -> tuple[TrainedModel, TrainingHistory]:
    """Train a classifier on the manifest's train split.

    Shuffles per epoch with the seeded generator, aborts on non-finite
    loss, tracks per-epoch statistics, and keeps the best checkpoint by
    validation loss (falling back to the final state when the manifest has
    no validation samples).
    """
    if preprocess is None:
        preprocess = PreprocessConfig(
            target_height=model_cfg.input_shape[0],
            target_width=model_cfg.input_shape[1],
        )
    train_images, train_targets = _load_split(manifest, "train", preprocess)
    if len(train_images) == 0:
        raise EmptyDataset("train split is empty")
    val_images, val_targets = _load_split(manifest, "val", preprocess)
    has_val = len(val_images) > 0

    rng = np.random.default_rng(tcfg.seed)
    network = DenseNetNetwork(model_cfg, rng=rng)
    optimizer = Adam(list(network.parameters()), tcfg.learning_rate)

    history = TrainingHistory()
    best_val = math.inf
    best_state: dict[str, np.ndarray] | None = None
    best_epoch = 0
    epochs_since_best = 0

    n = len(train_images)
    for epoch in range(1, tcfg.epochs + 1):
        started = time.monotonic()
        perm = rng.permutation(n)
        epoch_loss = 0.0
        correct = 0
        seen = 0
        for start in range(0, n, tcfg.batch_size):
            idx = perm[start : start + tcfg.batch_size]
            if len(idx) == 1 and n > 1:
                # a single sample cannot be batch-normalized meaningfully;
                # the permutation rotates which sample sits in the remainder
                continue
            x = train_images[idx]
            y = train_targets[idx]
            optimizer.zero_grad()
            logits = network.forward(x, training=True)
            loss, dlogits, probs = softmax_cross_entropy(logits, y)
            if not math.isfinite(loss):
                raise NonFiniteLoss(
                    f"loss became {loss} at epoch {epoch}, batch offset {start}"
                )
            network.backward(dlogits)
            optimizer.step()
            epoch_loss += loss * len(idx)
            correct += int((probs.argmax(axis=1) == y).sum())
            seen += len(idx)

        train_loss = epoch_loss / seen
        train_acc = correct / seen
        val_loss = val_acc = None
        if has_val:
            val_loss, val_acc = _eval_pass(network, val_images, val_targets, tcfg.batch_size)
        history.epochs.append(
            EpochStats(
                epoch=epoch,
                train_loss=train_loss,
                train_accuracy=train_acc,
                val_loss=val_loss,
                val_accuracy=val_acc,
                seconds=time.monotonic() - started,
            )
        )

        if has_val:
            if val_loss < best_val:
                best_val = val_loss
                best_state = {k: v.copy() for k, v in network.named_state().items()}
                best_epoch = epoch
                epochs_since_best = 0
                if tcfg.checkpoint_dir is not None:
                    _write_checkpoint(
                        network, model_cfg, preprocess, tcfg, epoch, tcfg.checkpoint_dir
                    )
            else:
                epochs_since_best += 1
                if tcfg.patience is not None and epochs_since_best >= tcfg.patience:
                    break

    epochs_completed = len(history)
    if best_state is not None:
        network.load_state(best_state)
    else:
        best_epoch = epochs_completed

    model = TrainedModel(
        config=model_cfg,
        network=network,
        catalog_strings=catalog().strings(),
        preprocess=preprocess,
        metadata={
            "optimizer": tcfg.optimizer,
            "loss": tcfg.loss,
            "batch_size": tcfg.batch_size,
            "learning_rate": tcfg.learning_rate,
            "epochs": tcfg.epochs,
            "epochs_completed": epochs_completed,
            "best_epoch": best_epoch,
            "seed": tcfg.seed,
        },
    )
    return model, history


def _write_checkpoint(network, model_cfg, preprocess, tcfg, epoch, directory: Path):
    model = TrainedModel(
        config=model_cfg,
        network=network,
        catalog_strings=catalog().strings(),
        preprocess=preprocess,
        metadata={
            "optimizer": tcfg.optimizer,
            "loss": tcfg.loss,
            "batch_size": tcfg.batch_size,
            "learning_rate": tcfg.learning_rate,
            "epochs": tcfg.epochs,
            "epochs_completed": epoch,
            "best_epoch": epoch,
            "seed": tcfg.seed,
        },
    )
    try:
        save_model(model, Path(directory))
    except OSError as exc:
        raise DiskError(f"checkpoint write failed: {exc}") from exc
