"""Directive templates that turn a monolingual prompt into a cross-lingual one.

The bundled catalog carries six patterns, each with exactly one ``{}``
placeholder for the target-language display name. Every template also has
a variant with the word "language" removed ("Answer in German language"
vs "Answer in German"); the variant is addressed by suffixing the template
id with ``+nolang``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .languages import display_name

NOLANG_SUFFIX = "+nolang"


@dataclass(frozen=True)
class DirectiveTemplate:
    template_id: str
    pattern: str
    drop_language_word: bool = False

    def validate(self) -> None:
        if self.pattern.count("{}") != 1 or self.pattern.count("{") != 1:
            raise ConfigError(
                f"directive template {self.template_id!r} must contain exactly one "
                f"{{}} placeholder: {self.pattern!r}"
            )

    @property
    def effective_pattern(self) -> str:
        if self.drop_language_word:
            return self.pattern.replace(" language", "", 1)
        return self.pattern

    def render(self, lang_code: str) -> str:
        self.validate()
        return self.effective_pattern.format(display_name(lang_code))


@dataclass(frozen=True)
class DirectiveCatalog:
    version: str
    templates: tuple[DirectiveTemplate, ...]

    def get(self, template_id: str) -> DirectiveTemplate:
        base_id = template_id.removesuffix(NOLANG_SUFFIX)
        drop = template_id.endswith(NOLANG_SUFFIX)
        for template in self.templates:
            if template.template_id == base_id:
                return DirectiveTemplate(template_id, template.pattern, drop_language_word=drop)
        raise ConfigError(f"unknown directive template id {template_id!r}")

    def ids(self) -> list[str]:
        return [t.template_id for t in self.templates]


def load_directive_catalog(path: str | Path | None = None) -> DirectiveCatalog:
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    else:
        ref = resources.files("crossling") / "data" / "directive_templates.json"
        raw = json.loads(ref.read_text(encoding="utf-8"))
    templates = tuple(
        DirectiveTemplate(template_id=entry["id"], pattern=entry["pattern"])
        for entry in raw["templates"]
    )
    if not templates:
        raise ConfigError("directive catalog carries no templates")
    for template in templates:
        template.validate()
    return DirectiveCatalog(version=str(raw["version"]), templates=templates)
