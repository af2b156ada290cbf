"""Four-stage synthesis pipeline with on-disk artifacts between stages.

Each stage reads the previous stage's line-delimited file and writes its
own, so expensive stages can be rerun or resumed individually and every
intermediate is auditable. All model traffic flows through the cached
gateway, which makes a rerun with a warm cache byte-identical and free of
backend calls.

Artifacts inside one run directory:

    passages.jsonl            sampled seed passages
    stage1_generated.jsonl    reverse-instruction pairs (+ stage1_errors.jsonl)
    stage2_refined.jsonl      refined pairs            (+ stage2_errors.jsonl)
    stage3_translated.jsonl   per-language translations (+ stage3_errors.jsonl)
    sft.jsonl                 final export (+ sft.jsonl.manifest.json)
    manifest.json             run manifest (digests, seeds, counts, stats)
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

from . import jsonio
from .benchmark import DIRECTIVE_JOINER
from .config import PipelineConfig, build_gateway, build_qe_client
from .corpus import LoadStats, load_seed, sample_passages
from .dataset import export_sft, filter_top, wrap_cross_lingual
from .directives import load_directive_catalog
from .errors import ConfigError, FatalPipelineError, TranslationError
from .synthesis import QAPair, generate_batch, refine_batch
from .translation import TranslatedResponse, Translator

logger = logging.getLogger(__name__)

STAGES = ("1", "2", "3", "4")

PASSAGES = "passages.jsonl"
STAGE1 = "stage1_generated.jsonl"
STAGE2 = "stage2_refined.jsonl"
STAGE3 = "stage3_translated.jsonl"
SFT = "sft.jsonl"
MANIFEST = "manifest.json"


@contextmanager
def run_lock(run_dir: Path):
    """One pipeline run per directory, enforced by an exclusive lock file."""
    run_dir.mkdir(parents=True, exist_ok=True)
    lock_path = run_dir / "lock"
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise FatalPipelineError(
            f"run directory {run_dir} is locked by another invocation "
            f"(remove {lock_path} if that run is dead)"
        ) from None
    try:
        os.close(fd)
        yield
    finally:
        lock_path.unlink(missing_ok=True)


def _require(path: Path) -> Path:
    if not path.exists():
        raise FatalPipelineError(f"missing upstream artifact: {path}")
    return path


class SynthesisPipeline:
    def __init__(self, config: PipelineConfig, run_id: str = "synthesis", resume: bool = False):
        self.config = config
        self.run_dir = config.run_root / run_id
        self.resume = resume
        self.gateway = build_gateway(config)
        self.catalog = load_directive_catalog(config.directive_catalog)
        self._qe = None

    @property
    def qe(self):
        # Lazy: stages 1-2 run without a QE endpoint configured.
        if self._qe is None:
            self._qe = build_qe_client(self.config)
        return self._qe

    def path(self, name: str) -> Path:
        return self.run_dir / name

    def _skip(self, output: Path) -> bool:
        if self.resume and output.exists():
            logger.info("skipping stage, output already present: %s", output)
            return True
        return False

    def run(self, stage: str) -> dict:
        with run_lock(self.run_dir):
            stages = STAGES if stage == "all" else (stage,)
            for name in stages:
                getattr(self, f"stage_{name}")()
            return self.write_manifest()

    # Stage 1: sample seed passages, generate reverse instructions.
    def stage_1(self) -> None:
        out = self.path(STAGE1)
        if self._skip(out):
            return
        if self.config.seed_path is None:
            raise ConfigError("seed_corpus.path is not configured")
        if not self.config.seed_path.exists():
            raise FatalPipelineError(f"missing seed corpus file: {self.config.seed_path}")
        stats = LoadStats()
        stream = load_seed(
            self.config.seed_path,
            format=self.config.seed_format,
            lang=self.config.src_lang,
            stats=stats,
        )
        sample = sample_passages(stream, self.config.sampling)
        jsonio.write_jsonl(
            self.path(PASSAGES),
            (
                {"id": p.id, "text": p.text, "source": p.source, "lang": p.lang}
                for p in sample.passages
            ),
        )
        jsonio.write_json(
            self.path("seed_stats.json"),
            {
                "records_read": stats.read,
                "records_skipped": stats.skipped,
                "eligible": sample.eligible,
                "duplicates_removed": sample.duplicates_removed,
                "requested": sample.requested,
                "sampled": len(sample.passages),
            },
        )
        logger.info(
            "sampled %d/%d passages (eligible=%d, skipped=%d)",
            len(sample.passages), sample.requested, sample.eligible, stats.skipped,
        )
        teacher = self.config.endpoint_for_role("teacher")
        pairs, errors = generate_batch(
            sample.passages,
            teacher,
            self.gateway,
            self.config.params,
            self.config.max_in_flight,
            self.config.templates_dir,
        )
        jsonio.write_jsonl(out, (pair.to_record() for pair in pairs))
        jsonio.write_jsonl(
            self.path("stage1_errors.jsonl"),
            ({"stage": "1", "id": e.item_id, "reason": str(e)} for e in errors),
        )

    # Stage 2: refine each pair against the four criteria.
    def stage_2(self) -> None:
        out = self.path(STAGE2)
        if self._skip(out):
            return
        pairs = [QAPair.from_record(r) for r in jsonio.read_jsonl(_require(self.path(STAGE1)))]
        teacher = self.config.endpoint_for_role("teacher")
        refined, errors = refine_batch(
            pairs,
            teacher,
            self.gateway,
            self.config.params,
            self.config.max_in_flight,
            self.config.templates_dir,
        )
        jsonio.write_jsonl(out, (pair.to_record() for pair in refined))
        jsonio.write_jsonl(
            self.path("stage2_errors.jsonl"),
            ({"stage": "2", "id": e.item_id, "reason": str(e)} for e in errors),
        )

    # Stage 3: translate every refined response into every target language.
    def stage_3(self) -> None:
        out = self.path(STAGE3)
        if self._skip(out):
            return
        pairs = [QAPair.from_record(r) for r in jsonio.read_jsonl(_require(self.path(STAGE2)))]
        if not self.config.languages:
            raise ConfigError("no target languages configured")
        strategy = self.config.selection_strategy()
        translator = Translator(
            self.gateway, self.qe, self.config.params, self.config.templates_dir
        )
        jobs = [(pair, lang) for pair in pairs for lang in self.config.languages]

        def translate(job: tuple[QAPair, str]):
            pair, lang = job
            item_id = f"{pair.id}#{lang}"
            try:
                translated = translator.translate_response(
                    pair.response, self.config.src_lang, lang, strategy, item_id
                )
                return item_id, pair, lang, translated, None
            except TranslationError as exc:
                return item_id, pair, lang, None, exc

        with ThreadPoolExecutor(max_workers=self.config.max_in_flight) as pool:
            results = list(pool.map(translate, jobs))

        results.sort(key=lambda entry: (entry[1].id, entry[2]))
        records = []
        errors = []
        for item_id, pair, lang, translated, exc in results:
            if exc is not None:
                logger.warning("translation dropped %s: %s", item_id, exc)
                errors.append({"stage": "3", "id": item_id, "reason": str(exc)})
                continue
            records.append(
                {
                    "id": pair.id,
                    "tgt_lang": lang,
                    "text": translated.text,
                    "sentence_scores": list(translated.sentence_scores),
                    "passage_qe": translated.passage_qe,
                    "strategy": strategy.tag,
                }
            )
        jsonio.write_jsonl(out, records)
        jsonio.write_jsonl(self.path("stage3_errors.jsonl"), errors)

    # Stage 4: filter by passage QE, wrap with directives, export.
    def stage_4(self) -> None:
        out = self.path(SFT)
        if self._skip(out):
            return
        stage3_rows = list(jsonio.read_jsonl(_require(self.path(STAGE3))))
        pairs_by_id = {
            record["id"]: QAPair.from_record(record)
            for record in jsonio.read_jsonl(_require(self.path(STAGE2)))
        }
        template = self.catalog.get(self.config.directive_template)
        strategy_tag = stage3_rows[0]["strategy"] if stage3_rows else self.config.strategy_kind

        examples = []
        for row in stage3_rows:
            pair = pairs_by_id.get(row["id"])
            if pair is None:
                raise FatalPipelineError(
                    f"stage3 record {row['id']} has no stage2 pair; artifacts out of sync"
                )
            translated = TranslatedResponse(
                text=row["text"],
                sentence_scores=tuple(row["sentence_scores"]),
                passage_qe=row["passage_qe"],
            )
            examples.append(
                wrap_cross_lingual(
                    pair,
                    translated,
                    row["tgt_lang"],
                    template,
                    strategy_tag,
                    src_lang=self.config.src_lang,
                    joiner=DIRECTIVE_JOINER,
                )
            )
        kept = filter_top(examples, self.config.filter)

        errors_path = self.path("stage3_errors.jsonl")
        translation_drops = (
            sum(1 for _ in jsonio.read_jsonl(errors_path)) if errors_path.exists() else 0
        )
        stage_counts = {
            "inputs": len(examples) + translation_drops,
            "kept": len(kept),
            "filtered": len(examples) - len(kept),
        }
        export_sft(
            kept,
            out,
            strategy=strategy_tag,
            scorer_id=self.config.qe.scorer_id if self.config.qe else "",
            catalog_version=self.catalog.version,
            stage_counts=stage_counts,
            drop_counts={"translation": translation_drops},
        )

    def write_manifest(self) -> dict:
        counts: dict = {}
        if self.path(PASSAGES).exists():
            counts["passages"] = sum(1 for _ in jsonio.read_jsonl(self.path(PASSAGES)))
        for stage_name, filename in (("stage1", STAGE1), ("stage2", STAGE2), ("stage3", STAGE3)):
            path = self.path(filename)
            if path.exists():
                errors_path = self.path(f"{stage_name}_errors.jsonl")
                n_errors = (
                    sum(1 for _ in jsonio.read_jsonl(errors_path)) if errors_path.exists() else 0
                )
                counts[stage_name] = {
                    "out": sum(1 for _ in jsonio.read_jsonl(path)),
                    "errors": n_errors,
                }
        manifest: dict = {
            "config_digest": self.config.config_digest,
            "seeds": self.config.seeds,
            "languages": list(self.config.languages),
            "strategy": self.config.strategy_kind,
            "counts": counts,
        }
        if self.path("seed_stats.json").exists():
            manifest["seed_stats"] = jsonio.read_json(self.path("seed_stats.json"))
        if self.config.seed_path is not None and self.config.seed_path.exists():
            manifest["seed_file_digest"] = jsonio.file_digest(self.config.seed_path)
        if self.path(SFT).exists():
            manifest["sft_digest"] = jsonio.file_digest(self.path(SFT))
            sft_manifest = jsonio.read_json(self.path(SFT + ".manifest.json"))
            manifest["dataset"] = sft_manifest
        manifest["gateway_stats"] = self.gateway.stats.snapshot()
        manifest["qe_backend_calls"] = self._qe.backend_calls if self._qe is not None else 0
        jsonio.write_json(self.path(MANIFEST), manifest)
        return manifest
