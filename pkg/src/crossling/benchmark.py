"""Construction of the two evaluation sets.

* Cross-lingual: every eligible English base prompt crossed with every
  target language, with a randomly sampled directive template appended
  ("Respond in German language"); a reason-then-translate rendering of the
  same items exists for the two-step prompting mode.
* Translated: every eligible base prompt machine-translated whole into
  each target language (no directive), plus an English passthrough.

The bundled base-prompt fixture is a stand-in keyed by prompt_id; swap in
the real prompt set for fidelity runs. The exclusion list is authoritative
input: the builders report (total, excluded, eligible) instead of
asserting a fixed eligible count.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

from . import jsonio
from .directives import NOLANG_SUFFIX, DirectiveCatalog
from .errors import ConfigError, GatewayError
from .gateway import GenerationParams, LlmGateway, ModelEndpoint, user_request
from .languages import display_name
from .prompts import load_template, render

logger = logging.getLogger(__name__)

MODE_ZERO_SHOT = "zero_shot"
MODE_RTT = "reason_then_translate"
MODE_SAME_LANGUAGE = "same_language"

KIND_CROSS_LINGUAL = "cross_lingual"
KIND_TRANSLATED = "translated"

DIRECTIVE_JOINER = "\n"

# The eight target languages of the primary evaluation set.
DEFAULT_LANGS = ("deu", "por", "hun", "lit", "gle", "mlt", "zho", "hin")


@dataclass(frozen=True)
class BasePrompt:
    prompt_id: int
    text: str
    excluded: bool = False
    exclusion_reason: str | None = None


@dataclass(frozen=True)
class BenchmarkItem:
    item_id: str
    prompt_id: int
    rendered_prompt: str
    tgt_lang: str
    template_id: str | None
    mode: str
    benchmark_kind: str
    base_text: str

    def to_record(self) -> dict:
        return {
            "item_id": self.item_id,
            "prompt_id": self.prompt_id,
            "rendered_prompt": self.rendered_prompt,
            "tgt_lang": self.tgt_lang,
            "template_id": self.template_id,
            "mode": self.mode,
            "benchmark_kind": self.benchmark_kind,
            "base_text": self.base_text,
        }

    @classmethod
    def from_record(cls, record: dict) -> "BenchmarkItem":
        return cls(
            item_id=record["item_id"],
            prompt_id=record["prompt_id"],
            rendered_prompt=record["rendered_prompt"],
            tgt_lang=record["tgt_lang"],
            template_id=record.get("template_id"),
            mode=record["mode"],
            benchmark_kind=record["benchmark_kind"],
            base_text=record["base_text"],
        )


@dataclass
class PromptSetReport:
    total: int
    excluded: int

    @property
    def eligible(self) -> int:
        return self.total - self.excluded


def load_base_prompts(
    prompts_path: str | Path | None = None,
    exclusions_path: str | Path | None = None,
) -> list[BasePrompt]:
    """Load the base prompt set with exclusion flags applied.

    Defaults to the bundled fixture and bundled exclusion list.
    """
    if prompts_path is not None:
        rows = list(jsonio.read_jsonl(Path(prompts_path)))
    else:
        ref = resources.files("crossling") / "data" / "base_prompts.jsonl"
        rows = [json.loads(line) for line in ref.read_text(encoding="utf-8").splitlines() if line]
    if exclusions_path is not None:
        exclusions = jsonio.read_json(Path(exclusions_path))
    else:
        ref = resources.files("crossling") / "data" / "excluded_prompts.json"
        exclusions = json.loads(ref.read_text(encoding="utf-8"))
    reasons = {int(entry["prompt_id"]): entry.get("reason", "excluded") for entry in exclusions["excluded"]}

    prompts: list[BasePrompt] = []
    seen: set[int] = set()
    for row in rows:
        pid = int(row["prompt_id"])
        if pid in seen:
            raise ConfigError(f"duplicate prompt_id {pid} in base prompt file")
        seen.add(pid)
        prompts.append(
            BasePrompt(
                prompt_id=pid,
                text=row["text"],
                excluded=pid in reasons,
                exclusion_reason=reasons.get(pid),
            )
        )
    missing = set(reasons) - seen
    if missing:
        raise ConfigError(f"exclusion list references unknown prompt ids: {sorted(missing)}")
    return prompts


def report_prompt_set(prompts: Sequence[BasePrompt]) -> PromptSetReport:
    return PromptSetReport(total=len(prompts), excluded=sum(1 for p in prompts if p.excluded))


def _sample_template(
    catalog_ids: Sequence[str], rng_seed: int, prompt_id: int, lang: str
) -> str:
    # Per-(prompt, language) stream: assignment is independent of build
    # order and reproducible for a fixed seed.
    rng = random.Random(f"{rng_seed}:{prompt_id}:{lang}")
    template_id = rng.choice(list(catalog_ids))
    if rng.random() < 0.5:
        template_id += NOLANG_SUFFIX
    return template_id


def build_xl_benchmark(
    base: Sequence[BasePrompt],
    langs: Sequence[str],
    catalog: DirectiveCatalog,
    rng_seed: int,
) -> list[BenchmarkItem]:
    """Cross-lingual items: eligible prompts x languages, one sampled
    directive template each (the no-"language" variant with probability 0.5)."""
    eligible = [p for p in base if not p.excluded]
    if not eligible:
        raise ConfigError("no eligible base prompts; cannot build a benchmark")
    if not catalog.templates:
        raise ConfigError("directive catalog is empty")
    for lang in langs:
        display_name(lang)

    catalog_ids = catalog.ids()
    items: list[BenchmarkItem] = []
    for prompt in sorted(eligible, key=lambda p: p.prompt_id):
        for lang in sorted(langs):
            template_id = _sample_template(catalog_ids, rng_seed, prompt.prompt_id, lang)
            template = catalog.get(template_id)
            rendered = prompt.text + DIRECTIVE_JOINER + template.render(lang)
            items.append(
                BenchmarkItem(
                    item_id=f"{prompt.prompt_id}:{lang}",
                    prompt_id=prompt.prompt_id,
                    rendered_prompt=rendered,
                    tgt_lang=lang,
                    template_id=template_id,
                    mode=MODE_ZERO_SHOT,
                    benchmark_kind=KIND_CROSS_LINGUAL,
                    base_text=prompt.text,
                )
            )
    return items


def build_translated_benchmark(
    base: Sequence[BasePrompt],
    langs: Sequence[str],
    gateway: LlmGateway,
    prompt_translator: ModelEndpoint,
    params: GenerationParams = GenerationParams(),
    max_in_flight: int = 4,
    templates_dir: str | None = None,
    src_lang: str = "eng",
) -> tuple[list[BenchmarkItem], list[str]]:
    """Same-language items: eligible prompts translated whole into each
    language, plus an untranslated English passthrough.

    Returns (items, per-item error descriptions); a failed translation
    drops that item and is reported, never aborting the build.
    """
    eligible = sorted((p for p in base if not p.excluded), key=lambda p: p.prompt_id)
    if not eligible:
        raise ConfigError("no eligible base prompts; cannot build a benchmark")
    template = load_template("translate", templates_dir)
    target_langs = [lang for lang in sorted(langs) if lang != src_lang]
    for lang in target_langs:
        display_name(lang)

    jobs: list[tuple[BasePrompt, str]] = [
        (prompt, lang) for prompt in eligible for lang in target_langs
    ]
    requests = [
        user_request(
            prompt_translator,
            render(template, src=display_name(src_lang), tgt=display_name(lang), text=prompt.text),
            params,
        )
        for prompt, lang in jobs
    ]
    completions = gateway.complete_batch(requests, max_in_flight)

    items: list[BenchmarkItem] = []
    errors: list[str] = []
    by_key: dict[tuple[int, str], str] = {}
    for (prompt, lang), completion in zip(jobs, completions):
        if isinstance(completion, GatewayError):
            errors.append(f"{prompt.prompt_id}:{lang}: {completion}")
            continue
        by_key[(prompt.prompt_id, lang)] = completion.strip()

    for prompt in eligible:
        for lang in [*target_langs, src_lang]:
            if lang == src_lang:
                rendered = prompt.text
            else:
                rendered = by_key.get((prompt.prompt_id, lang), "")
                if not rendered:
                    continue
            items.append(
                BenchmarkItem(
                    item_id=f"{prompt.prompt_id}:{lang}",
                    prompt_id=prompt.prompt_id,
                    rendered_prompt=rendered,
                    tgt_lang=lang,
                    template_id=None,
                    mode=MODE_SAME_LANGUAGE,
                    benchmark_kind=KIND_TRANSLATED,
                    base_text=prompt.text,
                )
            )
    items.sort(key=lambda item: (item.prompt_id, item.tgt_lang))
    return items, errors


def render_reason_then_translate(item: BenchmarkItem, templates_dir: str | None = None) -> BenchmarkItem:
    """Two-step rendering: answer in English first, then translate; only the
    final translation is to be output."""
    if item.benchmark_kind != KIND_CROSS_LINGUAL:
        raise ConfigError(f"{item.item_id}: reason-then-translate applies to cross-lingual items")
    if item.mode == MODE_RTT:
        raise ConfigError(f"{item.item_id}: item is already rendered for reason-then-translate")
    rendered = render(
        load_template("reason_then_translate", templates_dir),
        prompt=item.base_text,
        language=display_name(item.tgt_lang),
    )
    return replace(item, rendered_prompt=rendered, mode=MODE_RTT)


def write_benchmark(items: Sequence[BenchmarkItem], path: str | Path) -> str:
    """Write items as line-delimited records; returns the file digest."""
    path = Path(path)
    jsonio.write_jsonl(path, (item.to_record() for item in items))
    return jsonio.file_digest(path)


def read_benchmark(path: str | Path) -> list[BenchmarkItem]:
    return [BenchmarkItem.from_record(record) for record in jsonio.read_jsonl(Path(path))]
