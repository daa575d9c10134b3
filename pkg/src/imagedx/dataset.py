"""Dataset enumeration, validation, and manifest persistence.

Expected on-disk layout::

    root/
      train/<label-string>/<image files...>
      val/<label-string>/<image files...>

where ``<label-string>`` is a dot-delimited four-token label. The manifest
file format is UTF-8 text, one record per line:
``path<TAB>label<TAB>split``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from imagedx.errors import EmptyDataset, MalformedLabel, MissingSplitDirectory
from imagedx.labels import HierarchicalLabel, catalog, format_label, parse_label
from imagedx.preprocessing import ImageTensor, PreprocessConfig, load_image_file

SPLITS = ("train", "val")

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp"}


@dataclass(frozen=True)
class SampleEntry:
    image_path: Path
    label: HierarchicalLabel
    split: str

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")


@dataclass
class DatasetManifest:
    entries: list[SampleEntry]
    root: Path
    created_at: datetime = field(
        default_factory=lambda: datetime.now(timezone.utc)
    )

    def split_entries(self, split: str) -> list[SampleEntry]:
        if split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
        return [e for e in self.entries if e.split == split]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class ValidationReport:
    """Outcome of validate_manifest: problems are reported, never raised."""

    per_label_counts: dict[str, dict[str, int]]  # split -> label string -> count
    unknown_labels: list[str]
    missing_files: list[str]
    duplicate_paths: list[str]

    @property
    def ok(self) -> bool:
        return not (self.unknown_labels or self.missing_files or self.duplicate_paths)

    def split_total(self, split: str) -> int:
        return sum(self.per_label_counts[split].values())

    def summary(self) -> str:
        lines = [
            f"entries: train={self.split_total('train')} val={self.split_total('val')}",
            f"unknown labels: {len(self.unknown_labels)}",
            f"missing files: {len(self.missing_files)}",
            f"duplicate paths: {len(self.duplicate_paths)}",
            f"status: {'OK' if self.ok else 'FAILED'}",
        ]
        return "\n".join(lines)


def scan_directory(root: Path | str) -> DatasetManifest:
    """Enumerate a label-per-directory dataset tree into a manifest.

    Entries are sorted by path so repeated scans of the same tree are
    deterministic regardless of directory listing order.

    Raises:
        MissingSplitDirectory: train/ or val/ absent.
        MalformedLabel: a label directory name does not parse.
        EmptyDataset: the tree contains no image files.
    """
    root = Path(root).resolve()
    for split in SPLITS:
        if not (root / split).is_dir():
            raise MissingSplitDirectory(f"{root} has no {split}/ subdirectory")

    entries: list[SampleEntry] = []
    for split in SPLITS:
        split_dir = root / split
        for label_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
            label = parse_label(label_dir.name)  # MalformedLabel propagates
            for image_path in sorted(label_dir.iterdir()):
                if image_path.suffix.lower() in IMAGE_EXTENSIONS and image_path.is_file():
                    entries.append(
                        SampleEntry(image_path=image_path, label=label, split=split)
                    )
    if not entries:
        raise EmptyDataset(f"no image files found under {root}")
    entries.sort(key=lambda e: (e.split, str(e.image_path)))
    return DatasetManifest(entries=entries, root=root)


def validate_manifest(manifest: DatasetManifest) -> ValidationReport:
    """Check catalog membership, file existence, and duplicates."""
    cat = catalog()
    counts: dict[str, dict[str, int]] = {s: {} for s in SPLITS}
    unknown: list[str] = []
    missing: list[str] = []
    seen: set[str] = set()
    duplicates: list[str] = []

    for entry in manifest.entries:
        label_str = format_label(entry.label)
        counts[entry.split][label_str] = counts[entry.split].get(label_str, 0) + 1
        if entry.label not in cat:
            unknown.append(label_str)
        path_str = str(entry.image_path)
        if path_str in seen:
            duplicates.append(path_str)
        seen.add(path_str)
        if not entry.image_path.is_file():
            missing.append(path_str)

    return ValidationReport(
        per_label_counts=counts,
        unknown_labels=sorted(set(unknown)),
        missing_files=missing,
        duplicate_paths=duplicates,
    )


def class_distribution(manifest: DatasetManifest, split: str) -> dict[str, int]:
    """Per-catalog-label sample counts for one split (absent labels -> 0)."""
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    dist = {label_str: 0 for label_str in catalog().strings()}
    for entry in manifest.entries:
        if entry.split != split:
            continue
        label_str = format_label(entry.label)
        if label_str in dist:
            dist[label_str] += 1
    return dist


def load_sample(entry: SampleEntry, cfg: PreprocessConfig) -> ImageTensor:
    """Decode and preprocess one manifest entry."""
    return load_image_file(entry.image_path, cfg)


def save_manifest(manifest: DatasetManifest, path: Path | str) -> None:
    """Write the manifest as path<TAB>label<TAB>split lines."""
    path = Path(path)
    lines = [
        f"{entry.image_path}\t{format_label(entry.label)}\t{entry.split}\n"
        for entry in manifest.entries
    ]
    path.write_text("".join(lines), encoding="utf-8")


def load_manifest(path: Path | str) -> DatasetManifest:
    """Read a manifest file written by save_manifest."""
    path = Path(path)
    entries: list[SampleEntry] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise MalformedLabel(
                f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
            )
        image_path, label_str, split = parts
        if split not in SPLITS:
            raise MalformedLabel(f"{path}:{lineno}: unknown split {split!r}")
        entries.append(
            SampleEntry(
                image_path=Path(image_path),
                label=parse_label(label_str),
                split=split,
            )
        )
    if not entries:
        raise EmptyDataset(f"manifest {path} has no entries")
    roots = {e.image_path.parent.parent.parent for e in entries}
    root = roots.pop() if len(roots) == 1 else path.resolve().parent
    return DatasetManifest(entries=entries, root=Path(root))
