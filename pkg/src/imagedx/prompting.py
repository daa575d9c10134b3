"""Diagnostic prompt synthesis from a predicted label.

The prompt text comes from a versioned template resource with four
placeholders ({scan}, {body_part}, {test}, {result}); label tokens are
humanized through a curated display map before substitution. Prompts
mandate four exact section headings so downstream parsing of the
completion is deterministic rather than heuristic.

Display corrections ("rential" -> "retinal", "turberculosis" ->
"tuberculosis") apply only here; raw label strings are never altered.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from imagedx.errors import UnknownLabel
from imagedx.labels import HierarchicalLabel, catalog, format_label

TEMPLATE_VERSION = "v1"
_TEMPLATE_RESOURCE = "diagnosis_prompt_v1.txt"

# canonical section keys, in report order
REQUIRED_SECTIONS: tuple[str, ...] = (
    "findings_summary",
    "possible_causes",
    "prescriptions_treatment",
    "follow_up",
)

SECTION_HEADINGS: dict[str, str] = {
    "findings_summary": "Findings Summary",
    "possible_causes": "Possible Causes",
    "prescriptions_treatment": "Prescriptions and Treatment",
    "follow_up": "Follow-up",
}

_SCAN_DISPLAY = {
    "ct-scan": "CT scan",
    "mri": "MRI",
    "oct-scan": "OCT scan",
    "ultrasound": "ultrasound",
    "xray": "X-ray",
}

_BODY_PART_DISPLAY = {
    "chest": "chest",
    "brain": "brain",
    "rential": "retinal",
    "breast": "breast",
}

_TEST_DISPLAY = {
    "cancer-test": "cancer test",
    "alzheimer-test": "Alzheimer's disease test",
    "tumor-test": "tumor test",
    "rential-oct-test": "retinal OCT test",
    "pneumonia-test": "pneumonia test",
}

_RESULT_DISPLAY = {
    "adenocarcinoma": "adenocarcinoma",
    "benign": "benign",
    "large-cell-carcinoma": "large cell carcinoma",
    "malignant": "malignant",
    "normal": "normal",
    "squamous-cell-carcinoma": "squamous cell carcinoma",
    "mild-demented": "mild dementia",
    "moderate-demented": "moderate dementia",
    "non-demented": "no dementia",
    "very-mild-demented": "very mild dementia",
    "glioma-tumor": "glioma tumor",
    "meningioma-tumor": "meningioma tumor",
    "no-tumor": "no tumor",
    "pituitary-tumor": "pituitary tumor",
    "choroidal-neovascularization": "choroidal neovascularization",
    "diabetic-macular-edema": "diabetic macular edema",
    "multiple-drusen": "multiple drusen",
    "covid19": "COVID-19",
    "pneumonia": "pneumonia",
    "turberculosis": "tuberculosis",
}

_FIELD_MAPS = {
    "scan_name": _SCAN_DISPLAY,
    "body_part": _BODY_PART_DISPLAY,
    "test_name": _TEST_DISPLAY,
    "result": _RESULT_DISPLAY,
}


@dataclass(frozen=True)
class DiagnosisPrompt:
    text: str
    source_label: HierarchicalLabel
    template_version: str
    required_sections: tuple[str, ...] = REQUIRED_SECTIONS


def humanize_token(token: str, field: str) -> str:
    """Display form of a label token.

    Curated entries cover every catalog token; anything else falls back to
    hyphen -> space.
    """
    if field not in _FIELD_MAPS:
        raise ValueError(f"unknown label field {field!r}")
    return _FIELD_MAPS[field].get(token, token.replace("-", " "))


def _packaged_template() -> str:
    return (
        resources.files("imagedx.templates")
        .joinpath(_TEMPLATE_RESOURCE)
        .read_text(encoding="utf-8")
    )


def template_fingerprint(text: str | None = None) -> str:
    """sha256 of the template body; pins wording to a template_version."""
    if text is None:
        text = _packaged_template()
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def generate_prompt(
    label: HierarchicalLabel, template_path: Path | str | None = None
) -> DiagnosisPrompt:
    """Build the deterministic diagnostic prompt for a catalog label.

    Raises UnknownLabel for labels outside the catalog: prompts are only
    produced for classes the model can actually predict.
    """
    if label not in catalog():
        raise UnknownLabel(f"label {format_label(label)} is not in the catalog")
    if template_path is None:
        template = _packaged_template()
        version = TEMPLATE_VERSION
    else:
        template = Path(template_path).read_text(encoding="utf-8")
        version = "custom-" + template_fingerprint(template)[:8]
    text = template.format(
        scan=humanize_token(label.scan_name, "scan_name"),
        body_part=humanize_token(label.body_part, "body_part"),
        test=humanize_token(label.test_name, "test_name"),
        result=humanize_token(label.result, "result"),
    )
    return DiagnosisPrompt(
        text=text, source_label=label, template_version=version
    )
