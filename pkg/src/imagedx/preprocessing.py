"""Image decoding and preprocessing.

Every image entering the classifier goes through the same pipeline:
decode -> resize to the configured target -> 3-channel layout -> scale to
[0, 1] -> per-channel normalization. The output shape is independent of
the input image size.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from imagedx.errors import DecodeError, UnsupportedChannelCount

REPLICATE_GRAY = "replicate_gray_to_3"
KEEP_3 = "keep_3"


@dataclass(frozen=True)
class PreprocessConfig:
    """Resize/normalization settings applied before inference and training.

    Defaults: 224x224 (canonical DenseNet-121 input), grayscale replicated
    to 3 channels, mean 0.5 / std 0.5 per channel after scaling to [0, 1].
    """

    target_height: int = 224
    target_width: int = 224
    channel_policy: str = REPLICATE_GRAY
    mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    std: tuple[float, float, float] = (0.5, 0.5, 0.5)

    def __post_init__(self) -> None:
        if self.target_height <= 0 or self.target_width <= 0:
            raise ValueError("target dimensions must be positive")
        if self.channel_policy not in (REPLICATE_GRAY, KEEP_3):
            raise ValueError(f"unknown channel_policy {self.channel_policy!r}")
        if any(s <= 0 for s in self.std):
            raise ValueError("std components must be positive")

    def to_dict(self) -> dict:
        return {
            "target_height": self.target_height,
            "target_width": self.target_width,
            "channel_policy": self.channel_policy,
            "mean": list(self.mean),
            "std": list(self.std),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PreprocessConfig":
        return cls(
            target_height=int(data["target_height"]),
            target_width=int(data["target_width"]),
            channel_policy=data["channel_policy"],
            mean=tuple(float(v) for v in data["mean"]),
            std=tuple(float(v) for v in data["std"]),
        )


@dataclass
class ImageTensor:
    """Preprocessed image: float array of shape (height, width, 3)."""

    values: np.ndarray

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def decode_image(data: bytes) -> Image.Image:
    """Decode raw bytes into a PIL image. Raises DecodeError on failure."""
    try:
        image = Image.open(io.BytesIO(data))
        image.load()
        return image
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"could not decode image bytes: {exc}") from exc


def preprocess_image(image: Image.Image, cfg: PreprocessConfig) -> ImageTensor:
    """Resize, lay out 3 channels, scale to [0,1], and normalize."""
    mode = image.mode
    if mode in ("RGBA", "LA", "CMYK", "PA"):
        raise UnsupportedChannelCount(
            f"image mode {mode!r} not supported (alpha/ink channels are not stripped)"
        )
    if mode == "RGB":
        rgb = image
    elif mode in ("L", "I", "I;16", "F", "1"):
        if cfg.channel_policy != REPLICATE_GRAY:
            raise UnsupportedChannelCount(
                f"grayscale input but channel_policy={cfg.channel_policy!r}"
            )
        rgb = image.convert("L").convert("RGB")
    elif mode == "P":
        converted = image.convert("RGBA")
        # palette images may carry transparency; reject those like RGBA
        alpha = np.asarray(converted)[..., 3]
        if (alpha != 255).any():
            raise UnsupportedChannelCount("palette image with transparency")
        rgb = converted.convert("RGB")
    else:
        raise UnsupportedChannelCount(f"image mode {mode!r} not supported")

    resized = rgb.resize((cfg.target_width, cfg.target_height), Image.BILINEAR)
    arr = np.asarray(resized, dtype=np.float32) / 255.0
    mean = np.asarray(cfg.mean, dtype=np.float32)
    std = np.asarray(cfg.std, dtype=np.float32)
    arr = (arr - mean) / std
    return ImageTensor(values=arr)


def load_image_bytes(data: bytes, cfg: PreprocessConfig) -> ImageTensor:
    """decode_image + preprocess_image on in-memory bytes."""
    return preprocess_image(decode_image(data), cfg)


def load_image_file(path: Path | str, cfg: PreprocessConfig) -> ImageTensor:
    """Load and preprocess an image file."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DecodeError(f"could not read image file {path}: {exc}") from exc
    return load_image_bytes(data, cfg)
