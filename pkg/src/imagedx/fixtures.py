"""Synthetic dataset fixtures.

The real 152,856-image corpus is not distributable, so tests and demos run
on procedurally drawn stand-ins: each class gets a unique sinusoidal grating
(frequency x orientation x color tint) plus per-image noise, which a small
convnet can separate easily. The reference per-label counts reproduce the
published class distribution exactly at scale 1.0.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image

from imagedx.dataset import DatasetManifest, SampleEntry, scan_directory
from imagedx.labels import CATALOG_LABEL_STRINGS, catalog, parse_label

# Per-label (train, val) counts of the reference corpus, in catalog order.
REFERENCE_COUNTS: dict[str, tuple[int, int]] = {
    "ct-scan.chest.cancer-test.adenocarcinoma": (1093, 274),
    "ct-scan.chest.cancer-test.benign": (96, 24),
    "ct-scan.chest.cancer-test.large-cell-carcinoma": (628, 158),
    "ct-scan.chest.cancer-test.malignant": (448, 113),
    "ct-scan.chest.cancer-test.normal": (1011, 253),
    "ct-scan.chest.cancer-test.squamous-cell-carcinoma": (881, 221),
    "mri.brain.alzheimer-test.mild-demented": (7884, 1972),
    "mri.brain.alzheimer-test.moderate-demented": (5222, 1306),
    "mri.brain.alzheimer-test.non-demented": (10242, 2560),
    "mri.brain.alzheimer-test.very-mild-demented": (8960, 2240),
    "mri.brain.tumor-test.glioma-tumor": (1881, 471),
    "mri.brain.tumor-test.meningioma-tumor": (1316, 329),
    "mri.brain.tumor-test.no-tumor": (400, 100),
    "mri.brain.tumor-test.pituitary-tumor": (1464, 367),
    "oct-scan.rential.rential-oct-test.choroidal-neovascularization": (29964, 7491),
    "oct-scan.rential.rential-oct-test.diabetic-macular-edema": (9278, 2320),
    "oct-scan.rential.rential-oct-test.multiple-drusen": (7092, 1780),
    "oct-scan.rential.rential-oct-test.normal": (21254, 5331),
    "ultrasound.breast.cancer-test.benign": (3780, 945),
    "ultrasound.breast.cancer-test.malignant": (3553, 889),
    "ultrasound.breast.cancer-test.normal": (106, 27),
    "xray.chest.pneumonia-test.covid19": (460, 116),
    "xray.chest.pneumonia-test.normal": (1266, 317),
    "xray.chest.pneumonia-test.pneumonia": (3418, 855),
    "xray.chest.pneumonia-test.turberculosis": (560, 140),
}

TRAIN_TOTAL = 122_257
VAL_TOTAL = 30_599


def scaled_counts(scale: float) -> dict[str, tuple[int, int]]:
    """Reference counts scaled by ``scale``, rounded half-up, floored at 1."""
    if scale <= 0:
        raise ValueError("scale must be positive")

    def scale_one(count: int) -> int:
        return max(1, int(math.floor(count * scale + 0.5)))

    return {
        label: (scale_one(train), scale_one(val))
        for label, (train, val) in REFERENCE_COUNTS.items()
    }


def synthetic_manifest(scale: float = 1.0, root: Path | str = "/synthetic") -> DatasetManifest:
    """In-memory manifest with the scaled reference distribution.

    Paths are fabricated (no files are written); useful for count/statistics
    checks at scales where materializing images would be wasteful.
    """
    root = Path(root)
    counts = scaled_counts(scale)
    entries = []
    for label_str in CATALOG_LABEL_STRINGS:
        label = parse_label(label_str)
        n_train, n_val = counts[label_str]
        for split, n in (("train", n_train), ("val", n_val)):
            for i in range(n):
                entries.append(
                    SampleEntry(
                        image_path=root / split / label_str / f"img_{i:06d}.png",
                        label=label,
                        split=split,
                    )
                )
    return DatasetManifest(entries=entries, root=root)


def class_image(
    class_index: int, image_size: int, rng: np.random.Generator
) -> np.ndarray:
    """One uint8 RGB image for a class: unique color triple + grating + noise.

    The color triple (base-3 digits of the class index) separates classes
    even under global average pooling; the grating adds per-class texture.
    """
    color = np.array(
        [
            0.25 + 0.25 * (class_index % 3),
            0.25 + 0.25 * ((class_index // 3) % 3),
            0.25 + 0.25 * ((class_index // 9) % 3),
        ]
    )
    freq = 2.0 + (class_index % 5) * 2.0
    theta = (class_index // 5) * (math.pi / 5.0)
    phase = rng.uniform(0.0, 2.0 * math.pi)

    yy, xx = np.mgrid[0:image_size, 0:image_size] / image_size
    wave = np.sin(
        2.0 * math.pi * freq * (xx * math.cos(theta) + yy * math.sin(theta)) + phase
    )
    img = color[None, None, :] + 0.2 * wave[..., None]
    img = img + rng.normal(0.0, 0.03, size=img.shape)
    return (np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def generate_fixture(
    root: Path | str,
    scale: float = 0.01,
    image_size: int = 32,
    seed: int = 0,
) -> DatasetManifest:
    """Write a scaled fixture tree under ``root`` and scan it.

    Layout matches scan_directory's contract (train/<label>/..., val/...).
    """
    root = Path(root)
    counts = scaled_counts(scale)
    cat = catalog()
    for label_str in CATALOG_LABEL_STRINGS:
        class_index = cat.index_of(parse_label(label_str))
        n_train, n_val = counts[label_str]
        for split, n in (("train", n_train), ("val", n_val)):
            out_dir = root / split / label_str
            out_dir.mkdir(parents=True, exist_ok=True)
            for i in range(n):
                rng = np.random.default_rng(
                    (seed, class_index, 0 if split == "train" else 1, i)
                )
                arr = class_image(class_index, image_size, rng)
                Image.fromarray(arr, mode="RGB").save(out_dir / f"img_{i:04d}.png")
    return scan_directory(root)


def generate_overfit_fixture(
    root: Path | str,
    per_class: int = 2,
    image_size: int = 32,
    seed: int = 0,
) -> DatasetManifest:
    """Tiny train-only fixture: ``per_class`` images per catalog class.

    The val/ directory is created empty so the tree still scans; training
    on this manifest exercises the memorization (overfit) oracle.
    """
    root = Path(root)
    (root / "val").mkdir(parents=True, exist_ok=True)
    cat = catalog()
    for label_str in CATALOG_LABEL_STRINGS:
        class_index = cat.index_of(parse_label(label_str))
        out_dir = root / "train" / label_str
        out_dir.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            rng = np.random.default_rng((seed, class_index, 0, i))
            arr = class_image(class_index, image_size, rng)
            Image.fromarray(arr, mode="RGB").save(out_dir / f"img_{i:04d}.png")
    return scan_directory(root)
