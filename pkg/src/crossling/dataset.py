"""Stage 4 and export: QE-based filtering, directive wrapping, SFT emission.

Filtering keeps the top ``keep_fraction`` of responses by passage-level QE
score (ceiling on the kept count, ties broken by ascending id). The scope
defaults to per-language so a QE scorer that is weak on one language
cannot empty that language's bucket; global scope is available as well. A
seeded random selection of the same size exists as an ablation baseline.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from . import jsonio
from .directives import DirectiveTemplate
from .errors import ConfigError
from .languages import display_name
from .synthesis import STAGE_REFINED, QAPair
from .translation import TranslatedResponse

logger = logging.getLogger(__name__)

SCOPES = ("global", "per_language")
SELECTIONS = ("top_qe", "random")

DEFAULT_JOINER = "\n"


@dataclass(frozen=True)
class CrossLingualExample:
    id: str
    instruction_xl: str
    response_xl: str
    src_lang: str
    tgt_lang: str
    passage_qe: float
    strategy: str
    template_id: str

    def validate(self) -> None:
        if self.tgt_lang == self.src_lang:
            raise ConfigError(f"{self.id}: target language equals source language")
        if not 0.0 <= self.passage_qe <= 1.0:
            raise ConfigError(f"{self.id}: passage_qe out of range: {self.passage_qe}")
        name = display_name(self.tgt_lang)
        directive = self.instruction_xl.rsplit(DEFAULT_JOINER, 1)[-1]
        if directive.count(name) != 1:
            raise ConfigError(
                f"{self.id}: directive must name {name} exactly once: {directive!r}"
            )

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "instruction": self.instruction_xl,
            "response": self.response_xl,
            "src_lang": self.src_lang,
            "tgt_lang": self.tgt_lang,
            "passage_qe": self.passage_qe,
            "template_id": self.template_id,
        }


@dataclass(frozen=True)
class FilterConfig:
    keep_fraction: float = 0.8
    scope: str = "per_language"
    selection: str = "top_qe"
    rng_seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ConfigError(f"keep_fraction must be in (0, 1], got {self.keep_fraction}")
        if self.scope not in SCOPES:
            raise ConfigError(f"unknown filter scope {self.scope!r}; expected one of {SCOPES}")
        if self.selection not in SELECTIONS:
            raise ConfigError(
                f"unknown filter selection {self.selection!r}; expected one of {SELECTIONS}"
            )


@dataclass
class DatasetManifest:
    counts_per_language: dict[str, int]
    stage_counts: dict[str, int]
    drop_counts: dict[str, int]
    strategy: str
    scorer_id: str
    catalog_version: str
    content_digest: str
    exported: int

    def to_record(self) -> dict:
        return {
            "counts_per_language": self.counts_per_language,
            "stage_counts": self.stage_counts,
            "drop_counts": self.drop_counts,
            "strategy": self.strategy,
            "scorer_id": self.scorer_id,
            "catalog_version": self.catalog_version,
            "content_digest": self.content_digest,
            "exported": self.exported,
        }

    def reconciles(self) -> bool:
        """inputs = kept + filtered + item-errors, when those counts are present."""
        inputs = self.stage_counts.get("inputs")
        kept = self.stage_counts.get("kept")
        filtered = self.stage_counts.get("filtered")
        if inputs is None or kept is None or filtered is None:
            return False
        return inputs == kept + filtered + sum(self.drop_counts.values())


def kept_count(keep_fraction: float, n: int) -> int:
    """ceil(keep_fraction * n), computed exactly in rational arithmetic."""
    return math.ceil(Fraction(str(keep_fraction)) * n)


def filter_top(items: Sequence, cfg: FilterConfig) -> list:
    """Keep the top fraction of scored items within each scope bucket.

    Items need ``passage_qe``, ``id`` and ``tgt_lang`` attributes. Kept
    items are returned bucket by bucket (buckets in ascending language
    order), each bucket sorted by descending score with ascending-id
    tie-breaks, so the output is deterministic.
    """
    cfg.validate()
    if cfg.scope == "per_language":
        buckets: dict[str, list] = {}
        for item in items:
            buckets.setdefault(item.tgt_lang, []).append(item)
    else:
        buckets = {"": list(items)}

    kept: list = []
    for key in sorted(buckets):
        group = buckets[key]
        n_keep = kept_count(cfg.keep_fraction, len(group))
        ranked = sorted(group, key=lambda item: (-item.passage_qe, item.id))
        if cfg.selection == "top_qe":
            kept.extend(ranked[:n_keep])
        else:
            rng = random.Random(f"{cfg.rng_seed}:{key}")
            chosen = rng.sample(range(len(ranked)), n_keep)
            kept.extend(ranked[i] for i in sorted(chosen))
    return kept


def wrap_cross_lingual(
    pair: QAPair,
    translated: TranslatedResponse,
    tgt_lang: str,
    template: DirectiveTemplate,
    strategy_tag: str,
    src_lang: str = "eng",
    joiner: str = DEFAULT_JOINER,
) -> CrossLingualExample:
    """Attach a language directive to the instruction and pair it with the
    translated response."""
    if pair.stage != STAGE_REFINED:
        raise ConfigError(f"{pair.id}: only refined pairs are wrapped, got stage={pair.stage}")
    template.validate()
    example = CrossLingualExample(
        id=f"{pair.id}#{tgt_lang}",
        instruction_xl=pair.instruction + joiner + template.render(tgt_lang),
        response_xl=translated.text,
        src_lang=src_lang,
        tgt_lang=tgt_lang,
        passage_qe=translated.passage_qe,
        strategy=strategy_tag,
        template_id=template.template_id,
    )
    example.validate()
    return example


def export_sft(
    examples: Sequence[CrossLingualExample],
    path: str | Path,
    *,
    strategy: str = "",
    scorer_id: str = "",
    catalog_version: str = "",
    stage_counts: dict[str, int] | None = None,
    drop_counts: dict[str, int] | None = None,
) -> DatasetManifest:
    """Write the SFT file and its manifest; deterministic given input order."""
    path = Path(path)
    for example in examples:
        example.validate()
    jsonio.write_jsonl(path, (example.to_record() for example in examples))
    digest = jsonio.file_digest(path)

    per_language: dict[str, int] = {}
    for example in examples:
        per_language[example.tgt_lang] = per_language.get(example.tgt_lang, 0) + 1

    manifest = DatasetManifest(
        counts_per_language=per_language,
        stage_counts=dict(stage_counts or {}),
        drop_counts=dict(drop_counts or {}),
        strategy=strategy,
        scorer_id=scorer_id,
        catalog_version=catalog_version,
        content_digest=digest,
        exported=len(examples),
    )
    jsonio.write_json(path.with_name(path.name + ".manifest.json"), manifest.to_record())
    return manifest
