"""Canonical hierarchical label schema.

A label is a dot-delimited string of four lowercase tokens naming the scan
type, the body part, the test, and the result, e.g.
``mri.brain.tumor-test.glioma-tumor``. This module is the single import
point for:

- parsing/formatting between the wire string and :class:`HierarchicalLabel`
- the fixed 25-entry catalog that defines the classifier's output ordering

Catalog order is load-bearing: class index ``i`` of every trained model is
``catalog().entries[i]``, so the listing below must never be reordered.
Two published token spellings ("rential", "turberculosis") are preserved
verbatim; display-time corrections live in the prompting layer.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

from imagedx.errors import MalformedLabel

TOKEN_PATTERN = re.compile(r"^[a-z0-9]+(-[a-z0-9]+)*$")

_FIELD_NAMES = ("scan_name", "body_part", "test_name", "result")


@dataclass(frozen=True)
class HierarchicalLabel:
    """Four-part label: scan type, body part, test, result."""

    scan_name: str
    body_part: str
    test_name: str
    result: str

    def __post_init__(self) -> None:
        for field_name in _FIELD_NAMES:
            token = getattr(self, field_name)
            if not isinstance(token, str) or not TOKEN_PATTERN.match(token):
                raise MalformedLabel(
                    f"{field_name} token {token!r} does not match the label grammar"
                )

    def __str__(self) -> str:
        return format_label(self)


def parse_label(raw: str) -> HierarchicalLabel:
    """Parse a dot-delimited label string into its four fields.

    Raises:
        MalformedLabel: if the string does not have exactly four segments
            or any segment violates the token grammar.
    """
    if not isinstance(raw, str):
        raise MalformedLabel(f"label must be a string, got {type(raw).__name__}")
    segments = raw.split(".")
    if len(segments) != 4:
        raise MalformedLabel(
            f"label {raw!r} has {len(segments)} segment(s), expected 4"
        )
    for name, segment in zip(_FIELD_NAMES, segments):
        if not TOKEN_PATTERN.match(segment):
            raise MalformedLabel(
                f"label {raw!r}: segment {segment!r} ({name}) violates the token grammar"
            )
    return HierarchicalLabel(*segments)


def format_label(label: HierarchicalLabel) -> str:
    """Format a label back to its dot-delimited wire string."""
    return ".".join(
        (label.scan_name, label.body_part, label.test_name, label.result)
    )


# The 25 catalog label strings, in canonical (row) order. Index in this
# tuple == classifier class index.
CATALOG_LABEL_STRINGS: tuple[str, ...] = (
    "ct-scan.chest.cancer-test.adenocarcinoma",
    "ct-scan.chest.cancer-test.benign",
    "ct-scan.chest.cancer-test.large-cell-carcinoma",
    "ct-scan.chest.cancer-test.malignant",
    "ct-scan.chest.cancer-test.normal",
    "ct-scan.chest.cancer-test.squamous-cell-carcinoma",
    "mri.brain.alzheimer-test.mild-demented",
    "mri.brain.alzheimer-test.moderate-demented",
    "mri.brain.alzheimer-test.non-demented",
    "mri.brain.alzheimer-test.very-mild-demented",
    "mri.brain.tumor-test.glioma-tumor",
    "mri.brain.tumor-test.meningioma-tumor",
    "mri.brain.tumor-test.no-tumor",
    "mri.brain.tumor-test.pituitary-tumor",
    "oct-scan.rential.rential-oct-test.choroidal-neovascularization",
    "oct-scan.rential.rential-oct-test.diabetic-macular-edema",
    "oct-scan.rential.rential-oct-test.multiple-drusen",
    "oct-scan.rential.rential-oct-test.normal",
    "ultrasound.breast.cancer-test.benign",
    "ultrasound.breast.cancer-test.malignant",
    "ultrasound.breast.cancer-test.normal",
    "xray.chest.pneumonia-test.covid19",
    "xray.chest.pneumonia-test.normal",
    "xray.chest.pneumonia-test.pneumonia",
    "xray.chest.pneumonia-test.turberculosis",
)

NUM_CLASSES = len(CATALOG_LABEL_STRINGS)


class LabelCatalog:
    """Fixed, ordered catalog of the 25 classifiable labels.

    The catalog is a bijection between labels and class indices 0..24.
    """

    def __init__(self, entries: tuple[HierarchicalLabel, ...]):
        if len(entries) != len(set(entries)):
            raise ValueError("catalog entries must be distinct")
        self._entries = entries
        self._index = {label: i for i, label in enumerate(entries)}

    @property
    def entries(self) -> tuple[HierarchicalLabel, ...]:
        return self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __contains__(self, label: HierarchicalLabel) -> bool:
        return label in self._index

    def index_of(self, label: HierarchicalLabel) -> int:
        """Class index of a catalog label. KeyError if not in the catalog."""
        return self._index[label]

    def label_at(self, index: int) -> HierarchicalLabel:
        """Catalog label at a class index. IndexError if out of range."""
        if not 0 <= index < len(self._entries):
            raise IndexError(f"class index {index} outside 0..{len(self._entries) - 1}")
        return self._entries[index]

    def strings(self) -> tuple[str, ...]:
        return tuple(format_label(label) for label in self._entries)


@lru_cache(maxsize=1)
def catalog() -> LabelCatalog:
    """The canonical 25-entry catalog (cached; immutable)."""
    return LabelCatalog(tuple(parse_label(s) for s in CATALOG_LABEL_STRINGS))
