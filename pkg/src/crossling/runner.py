"""Evaluation runs: generate candidate and reference outputs over a
benchmark, judge them pairwise, optionally score rubrics, and emit reports.

Run directory layout:

    runs/<run_id>/outputs.jsonl         one record per (item, model)
    runs/<run_id>/verdicts.jsonl        parsed pairwise verdicts
    runs/<run_id>/verdict_errors.jsonl  unparseable judgments (excluded from n_items)
    runs/<run_id>/rubrics.jsonl         per-criterion 1-5 scores (with --rubrics)
    runs/<run_id>/report.jsonl|csv|md   machine- and human-readable tables
    runs/<run_id>/manifest.json         models, params, digests, seeds, stats

Result stores are append-only; resuming re-runs only the missing items and
refuses to continue if the benchmark file no longer matches the manifest's
digest.
"""

from __future__ import annotations

import csv
import logging
from fractions import Fraction
from pathlib import Path

from . import jsonio
from .benchmark import BenchmarkItem, read_benchmark
from .config import PipelineConfig, build_gateway
from .errors import FatalPipelineError, VerdictError
from .evaluation import (
    RUBRIC_CRITERIA,
    JudgeVerdict,
    ModelOutput,
    RubricScore,
    auto_verdict,
    average_win_rate,
    generate_outputs,
    judge_pairwise,
    judge_rubric,
    macro_average_rubrics,
    majority_verdict,
    win_rates_by_language,
)
from .pipeline import run_lock

logger = logging.getLogger(__name__)


def _pct(value: Fraction | float) -> float:
    return round(float(value), 2)


class EvalRunner:
    def __init__(
        self,
        config: PipelineConfig,
        benchmark_path: str | Path,
        candidate_id: str,
        reference_id: str,
        run_id: str,
        rubrics: bool = False,
        resume: bool = False,
    ):
        self.config = config
        self.benchmark_path = Path(benchmark_path)
        self.candidate = config.endpoint(candidate_id)
        self.reference = config.endpoint(reference_id)
        self.judge = config.endpoint_for_role("judge")
        self.run_dir = config.run_root / run_id
        self.rubrics = rubrics
        self.resume = resume
        self.gateway = build_gateway(config)

    def path(self, name: str) -> Path:
        return self.run_dir / name

    def run(self) -> dict:
        with run_lock(self.run_dir):
            if not self.benchmark_path.exists():
                raise FatalPipelineError(f"missing benchmark file: {self.benchmark_path}")
            items = read_benchmark(self.benchmark_path)
            digest = jsonio.file_digest(self.benchmark_path)
            self._check_manifest(digest)
            if not self.resume:
                # Result stores are append-only within a run; reusing the
                # directory without --resume starts a fresh run.
                for name in (
                    "outputs.jsonl", "verdicts.jsonl", "verdict_errors.jsonl",
                    "rubrics.jsonl", "rubric_errors.jsonl",
                ):
                    self.path(name).unlink(missing_ok=True)
            outputs = self._generate(items)
            verdicts, verdict_errors = self._judge(items, outputs)
            scores = self._rubrics(items, outputs) if self.rubrics else []
            report = self._report(items, verdicts, scores, verdict_errors)
            manifest = {
                "benchmark_digest": digest,
                "benchmark_file": self.benchmark_path.name,
                "candidate": self.candidate.model_id,
                "reference": self.reference.model_id,
                "judge": self.judge.model_id,
                "params": {
                    "temperature": self.config.params.temperature,
                    "max_tokens": self.config.params.max_tokens,
                },
                "seeds": self.config.seeds,
                "config_digest": self.config.config_digest,
                "counts": {
                    "items": len(items),
                    "judged": len(verdicts),
                    "verdict_errors": len(verdict_errors),
                    "rubric_scores": len(scores),
                },
                "gateway_stats": self.gateway.stats.snapshot(),
            }
            jsonio.write_json(self.path("manifest.json"), manifest)
            return report

    def _check_manifest(self, digest: str) -> None:
        manifest_path = self.path("manifest.json")
        if self.resume and manifest_path.exists():
            previous = jsonio.read_json(manifest_path)
            if previous.get("benchmark_digest") != digest:
                raise FatalPipelineError(
                    f"benchmark digest mismatch on resume: manifest has "
                    f"{previous.get('benchmark_digest')}, file has {digest}"
                )

    def _generate(self, items: list[BenchmarkItem]) -> dict[tuple[str, str], ModelOutput]:
        outputs_path = self.path("outputs.jsonl")
        existing: dict[tuple[str, str], ModelOutput] = {}
        if self.resume and outputs_path.exists():
            for record in jsonio.read_jsonl(outputs_path):
                output = ModelOutput.from_record(record)
                existing[(output.item_id, output.model_id)] = output
        for model in (self.candidate, self.reference):
            missing = [
                item for item in items if (item.item_id, model.model_id) not in existing
            ]
            if not missing:
                continue
            for output in generate_outputs(
                self.gateway, model, missing, self.config.params, self.config.max_in_flight
            ):
                existing[(output.item_id, output.model_id)] = output
                jsonio.append_jsonl(outputs_path, output.to_record())
        return existing

    def _judge(
        self, items: list[BenchmarkItem], outputs: dict[tuple[str, str], ModelOutput]
    ) -> tuple[list[JudgeVerdict], list[dict]]:
        verdicts_path = self.path("verdicts.jsonl")
        errors_path = self.path("verdict_errors.jsonl")
        done: dict[str, JudgeVerdict] = {}
        errored: dict[str, dict] = {}
        if self.resume:
            if verdicts_path.exists():
                for record in jsonio.read_jsonl(verdicts_path):
                    verdict = JudgeVerdict.from_record(record)
                    done[verdict.item_id] = verdict
            if errors_path.exists():
                for record in jsonio.read_jsonl(errors_path):
                    errored[record["item_id"]] = record

        seed = self.config.seeds["judge_order"]
        for item in items:
            if item.item_id in done or item.item_id in errored:
                continue
            candidate_out = outputs[(item.item_id, self.candidate.model_id)]
            reference_out = outputs[(item.item_id, self.reference.model_id)]
            verdict = auto_verdict(
                item.item_id,
                candidate_out.errored or not candidate_out.text.strip(),
                reference_out.errored or not reference_out.text.strip(),
            )
            if verdict is None:
                replicates: list[JudgeVerdict] = []
                failure: VerdictError | None = None
                for replicate in range(self.config.judge_replicates):
                    # Replicates vary only the presentation order; replicate 0
                    # keeps the unreplicated seed derivation.
                    effective_seed = seed if replicate == 0 else seed + 100_003 * replicate
                    try:
                        replicates.append(
                            judge_pairwise(
                                self.gateway,
                                self.judge,
                                item,
                                candidate_out,
                                reference_out,
                                effective_seed,
                                self.config.params,
                                self.config.templates_dir,
                            )
                        )
                    except VerdictError as exc:
                        failure = exc
                if not replicates:
                    logger.warning("verdict error on %s: %s", item.item_id, failure)
                    record = {"item_id": item.item_id, "reason": str(failure)}
                    errored[item.item_id] = record
                    jsonio.append_jsonl(errors_path, record)
                    continue
                verdict = majority_verdict(item.item_id, replicates)
            done[item.item_id] = verdict
            jsonio.append_jsonl(verdicts_path, verdict.to_record())
        ordered = [done[item.item_id] for item in items if item.item_id in done]
        return ordered, list(errored.values())

    def _rubrics(
        self, items: list[BenchmarkItem], outputs: dict[tuple[str, str], ModelOutput]
    ) -> list[RubricScore]:
        rubrics_path = self.path("rubrics.jsonl")
        errors_path = self.path("rubric_errors.jsonl")
        done: dict[tuple[str, str], RubricScore] = {}
        if self.resume and rubrics_path.exists():
            for record in jsonio.read_jsonl(rubrics_path):
                score = RubricScore(
                    item_id=record["item_id"],
                    criterion=record["criterion"],
                    score=record["score"],
                )
                done[(score.item_id, score.criterion)] = score
        for item in items:
            output = outputs[(item.item_id, self.candidate.model_id)]
            if output.errored or not output.text.strip():
                continue
            for criterion in RUBRIC_CRITERIA:
                if (item.item_id, criterion) in done:
                    continue
                try:
                    score = judge_rubric(
                        self.gateway,
                        self.judge,
                        item,
                        output,
                        criterion,
                        self.config.params,
                        self.config.templates_dir,
                    )
                except VerdictError as exc:
                    logger.warning("rubric error on %s/%s: %s", item.item_id, criterion, exc)
                    jsonio.append_jsonl(
                        errors_path,
                        {"item_id": item.item_id, "criterion": criterion, "reason": str(exc)},
                    )
                    continue
                done[(item.item_id, criterion)] = score
                jsonio.append_jsonl(rubrics_path, score.to_record())
        return list(done.values())

    def _report(self, items, verdicts, scores, verdict_errors) -> dict:
        lang_by_item = {item.item_id: item.tgt_lang for item in items}
        per_language = win_rates_by_language(verdicts, lang_by_item) if verdicts else {}
        rows: list[dict] = []
        for lang, result in per_language.items():
            rows.append(
                {
                    "kind": "win_rate",
                    "lang": lang,
                    **result.to_record(),
                }
            )
        summary: dict = {
            "kind": "summary",
            "candidate": self.candidate.model_id,
            "reference": self.reference.model_id,
            "judged": len(verdicts),
            "verdict_errors": len(verdict_errors),
        }
        if per_language:
            summary["avg_win_rate_pct"] = float(average_win_rate(per_language))
        rows.append(summary)

        rubric_table = macro_average_rubrics(scores) if scores else {}
        for criterion, mean in rubric_table.items():
            rows.append({"kind": "rubric", "criterion": criterion, "mean": mean})

        jsonio.write_jsonl(self.path("report.jsonl"), rows)
        self._write_csv(per_language, summary)
        self._write_markdown(per_language, summary, rubric_table)
        return {
            "per_language": {lang: result.to_record() for lang, result in per_language.items()},
            "summary": summary,
            "rubrics": rubric_table,
        }

    def _write_csv(self, per_language, summary) -> None:
        langs = sorted(per_language)
        with open(self.path("report.csv"), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "avg", *langs])
            writer.writerow(
                [
                    self.candidate.model_id,
                    _pct(summary.get("avg_win_rate_pct", 0.0)),
                    *[_pct(per_language[lang].win_rate_pct) for lang in langs],
                ]
            )

    def _write_markdown(self, per_language, summary, rubric_table) -> None:
        langs = sorted(per_language)
        lines = [
            f"# Win rates: {self.candidate.model_id} vs {self.reference.model_id}",
            "",
            "| Model | Avg | " + " | ".join(langs) + " |",
            "|" + "---|" * (len(langs) + 2),
            "| "
            + " | ".join(
                [
                    self.candidate.model_id,
                    f"{_pct(summary.get('avg_win_rate_pct', 0.0)):.2f}",
                    *[f"{_pct(per_language[lang].win_rate_pct):.2f}" for lang in langs],
                ]
            )
            + " |",
            "",
            f"Judged items: {summary['judged']}; unparseable judgments: {summary['verdict_errors']}.",
        ]
        if rubric_table:
            lines += ["", "## Rubric scores (1-5)", ""]
            lines += [
                f"- {criterion}: {mean:.2f}" for criterion, mean in sorted(rubric_table.items())
            ]
        self.path("report.md").write_text("\n".join(lines) + "\n", encoding="utf-8")


def compare_runs(run_dir_a: str | Path, run_dir_b: str | Path) -> dict[str, float]:
    """Per-language win-rate deltas between two finished runs (b - a)."""
    def load(run_dir: Path) -> dict[str, float]:
        rows = jsonio.read_jsonl(run_dir / "report.jsonl")
        return {row["lang"]: row["win_rate_pct"] for row in rows if row.get("kind") == "win_rate"}

    left = load(Path(run_dir_a))
    right = load(Path(run_dir_b))
    return {lang: round(right[lang] - left[lang], 10) for lang in sorted(set(left) & set(right))}
