"""Prompt template files and the labeled-envelope output contract.

Templates ship as plain-text files with ``{placeholder}`` markers so the
wording can be swapped out without code changes. Model completions are
parsed with a tolerant matcher: labels are case-insensitive and a
section's content runs until the next label or the end of the text.
"""

from __future__ import annotations

import re
import string
from importlib import resources
from pathlib import Path

from .errors import ConfigError

TEMPLATE_NAMES = (
    "reverse_instruction",
    "refinement",
    "translate",
    "judge_pairwise",
    "rubric_precision",
    "rubric_informativeness",
    "rubric_naturalness",
    "rubric_objectivity",
    "reason_then_translate",
)


def load_template(name: str, templates_dir: str | Path | None = None) -> str:
    """Load a template by name, preferring an override directory if given."""
    filename = f"{name}.txt"
    if templates_dir is not None:
        override = Path(templates_dir) / filename
        if override.exists():
            return override.read_text(encoding="utf-8")
    ref = resources.files("crossling") / "templates" / filename
    if not ref.is_file():
        raise ConfigError(f"unknown prompt template {name!r}")
    return ref.read_text(encoding="utf-8")


def render(template: str, **values: str) -> str:
    """Fill a template, failing loudly on unknown or missing placeholders."""
    fields = {name for _, name, _, _ in string.Formatter().parse(template) if name}
    missing = fields - set(values)
    if missing:
        raise ConfigError(f"template is missing values for {sorted(missing)}")
    return template.format(**values)


def parse_labeled_sections(text: str, labels: tuple[str, ...]) -> dict[str, str]:
    """Extract ``LABEL: content`` sections from a completion.

    Labels match case-insensitively; content runs to the next label or the
    end of the text and is stripped of surrounding whitespace. When a label
    occurs more than once the first occurrence wins. Labels that never
    appear are absent from the result.
    """
    # Longest label first so that e.g. ORIGINAL QUESTION is not eaten by QUESTION.
    ordered = sorted(labels, key=len, reverse=True)
    pattern = re.compile(
        r"(?im)(?:^|[^\w])(" + "|".join(re.escape(lbl) for lbl in ordered) + r")\s*:\s*"
    )
    matches = list(pattern.finditer(text))
    sections: dict[str, str] = {}
    for i, match in enumerate(matches):
        label = match.group(1).upper()
        if label in sections:
            continue
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        sections[label] = text[match.end():end].strip()
    return sections


def parse_required_section(text: str, label: str) -> str:
    """Extract one mandatory non-empty section, or raise ValueError."""
    sections = parse_labeled_sections(text, (label,))
    content = sections.get(label.upper(), "")
    if not content:
        raise ValueError(f"completion carries no {label}: section")
    return content
