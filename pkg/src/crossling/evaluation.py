"""Pairwise judging, win rates, and rubric scoring.

A candidate model's outputs are compared item by item against a reference
model's outputs by a judge model. Presentation order is randomized per
item to blunt position bias, and the parsed label is mapped back through
the recorded order. Win rate gives ties half credit:

    win_rate_pct = 100 * (wins + 0.5 * ties) / n_items

``win_rate_pct`` is kept as an exact rational (fractions.Fraction), which
makes the label-swap antisymmetry ``swap = 100 - original`` hold exactly;
it compares and formats transparently against floats.

Rubric scoring maps one output to an integer 1-5 on each of four criteria
(precision, informativeness, naturalness, objectivity) using per-criterion
rubric templates and a ``SCORE:`` envelope.
"""

from __future__ import annotations

import logging
import random
import re
import statistics
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .benchmark import BenchmarkItem
from .errors import ConfigError, GatewayError, VerdictError
from .gateway import GenerationParams, LlmGateway, ModelEndpoint, user_request
from .prompts import load_template, render

logger = logging.getLogger(__name__)

WINNER_CANDIDATE = "candidate"
WINNER_REFERENCE = "reference"
WINNER_TIE = "tie"

CANDIDATE_FIRST = "candidate_first"
REFERENCE_FIRST = "reference_first"
NOT_JUDGED = "not_judged"

RUBRIC_CRITERIA = ("precision", "informativeness", "naturalness", "objectivity")

_VERDICT_RE = re.compile(r"(?im)\bVERDICT\s*:\s*(A|B|TIE)\b")
_SCORE_RE = re.compile(r"(?im)\bSCORE\s*:\s*(-?\d+)")


@dataclass(frozen=True)
class ModelOutput:
    item_id: str
    model_id: str
    text: str
    params: GenerationParams
    errored: bool = False

    def to_record(self) -> dict:
        return {
            "item_id": self.item_id,
            "model_id": self.model_id,
            "text": self.text,
            "temperature": self.params.temperature,
            "max_tokens": self.params.max_tokens,
            "errored": self.errored,
        }

    @classmethod
    def from_record(cls, record: dict) -> "ModelOutput":
        return cls(
            item_id=record["item_id"],
            model_id=record["model_id"],
            text=record["text"],
            params=GenerationParams(
                temperature=record["temperature"], max_tokens=record["max_tokens"]
            ),
            errored=record.get("errored", False),
        )


@dataclass(frozen=True)
class JudgeVerdict:
    item_id: str
    winner: str
    raw_judgment: str
    position_order: str

    def to_record(self) -> dict:
        return {
            "item_id": self.item_id,
            "winner": self.winner,
            "raw_judgment": self.raw_judgment,
            "position_order": self.position_order,
        }

    @classmethod
    def from_record(cls, record: dict) -> "JudgeVerdict":
        return cls(
            item_id=record["item_id"],
            winner=record["winner"],
            raw_judgment=record["raw_judgment"],
            position_order=record["position_order"],
        )


@dataclass(frozen=True)
class RubricScore:
    item_id: str
    criterion: str
    score: int

    def validate(self) -> None:
        if self.criterion not in RUBRIC_CRITERIA:
            raise VerdictError(self.item_id, f"unknown rubric criterion {self.criterion!r}")
        if self.score not in (1, 2, 3, 4, 5):
            raise VerdictError(self.item_id, f"rubric score out of range 1-5: {self.score}")

    def to_record(self) -> dict:
        return {"item_id": self.item_id, "criterion": self.criterion, "score": self.score}


@dataclass(frozen=True)
class WinRateResult:
    n_items: int
    wins: int
    losses: int
    ties: int
    win_rate_pct: Fraction

    def to_record(self) -> dict:
        return {
            "n_items": self.n_items,
            "wins": self.wins,
            "losses": self.losses,
            "ties": self.ties,
            "win_rate_pct": float(self.win_rate_pct),
        }


def generate_outputs(
    gateway: LlmGateway,
    model: ModelEndpoint,
    items: Sequence[BenchmarkItem],
    params: GenerationParams = GenerationParams(),
    max_in_flight: int = 4,
) -> list[ModelOutput]:
    """One output per item. A failed generation becomes an empty output
    flagged errored; downstream it counts as a loss rather than vanishing."""
    requests = [user_request(model, item.rendered_prompt, params) for item in items]
    completions = gateway.complete_batch(requests, max_in_flight)
    outputs: list[ModelOutput] = []
    for item, completion in zip(items, completions):
        if isinstance(completion, GatewayError):
            logger.warning("generation failed for %s on %s: %s", model.model_id, item.item_id, completion)
            outputs.append(
                ModelOutput(item.item_id, model.model_id, "", params, errored=True)
            )
        else:
            outputs.append(ModelOutput(item.item_id, model.model_id, completion, params))
    return outputs


def presentation_order(rng_seed: int, item_id: str) -> str:
    rng = random.Random(f"{rng_seed}:{item_id}")
    return CANDIDATE_FIRST if rng.random() < 0.5 else REFERENCE_FIRST


def parse_verdict(item_id: str, raw: str, order: str) -> JudgeVerdict:
    """Map the judge's A/B/TIE label back through the presentation order."""
    match = _VERDICT_RE.search(raw)
    if not match:
        raise VerdictError(item_id, f"no VERDICT label in judgment: {raw[:120]!r}")
    label = match.group(1).upper()
    if label == "TIE":
        winner = WINNER_TIE
    elif label == "A":
        winner = WINNER_CANDIDATE if order == CANDIDATE_FIRST else WINNER_REFERENCE
    else:
        winner = WINNER_REFERENCE if order == CANDIDATE_FIRST else WINNER_CANDIDATE
    return JudgeVerdict(item_id=item_id, winner=winner, raw_judgment=raw, position_order=order)


def judge_pairwise(
    gateway: LlmGateway,
    judge: ModelEndpoint,
    item: BenchmarkItem,
    candidate_output: ModelOutput,
    reference_output: ModelOutput,
    rng_seed: int,
    params: GenerationParams = GenerationParams(),
    templates_dir: str | None = None,
) -> JudgeVerdict:
    """Single pairwise judgment; raises VerdictError if the judgment cannot
    be parsed."""
    if candidate_output.item_id != item.item_id or reference_output.item_id != item.item_id:
        raise ConfigError(f"outputs do not belong to item {item.item_id}")
    order = presentation_order(rng_seed, item.item_id)
    first, second = (
        (candidate_output, reference_output)
        if order == CANDIDATE_FIRST
        else (reference_output, candidate_output)
    )
    prompt = render(
        load_template("judge_pairwise", templates_dir),
        query=item.rendered_prompt,
        response_a=first.text,
        response_b=second.text,
    )
    try:
        raw = gateway.complete(user_request(judge, prompt, params))
    except GatewayError as exc:
        raise VerdictError(item.item_id, f"judge call failed: {exc}") from exc
    return parse_verdict(item.item_id, raw, order)


def auto_verdict(item_id: str, candidate_errored: bool, reference_errored: bool) -> JudgeVerdict | None:
    """Verdict for items where at least one side produced no usable output.

    An errored or empty candidate counts as a loss; if only the reference
    side failed, the candidate wins; both failing is a tie. Returns None
    when both outputs are usable.
    """
    if not candidate_errored and not reference_errored:
        return None
    if candidate_errored and reference_errored:
        winner = WINNER_TIE
    elif candidate_errored:
        winner = WINNER_REFERENCE
    else:
        winner = WINNER_CANDIDATE
    return JudgeVerdict(
        item_id=item_id, winner=winner, raw_judgment="", position_order=NOT_JUDGED
    )


def win_rate(verdicts: Sequence[JudgeVerdict]) -> WinRateResult:
    """Aggregate parsed verdicts; ties earn half credit."""
    if not verdicts:
        raise ConfigError("win rate is undefined for zero judged items")
    wins = sum(1 for v in verdicts if v.winner == WINNER_CANDIDATE)
    losses = sum(1 for v in verdicts if v.winner == WINNER_REFERENCE)
    ties = sum(1 for v in verdicts if v.winner == WINNER_TIE)
    n = len(verdicts)
    if wins + losses + ties != n:
        raise ConfigError("verdicts carry unknown winner labels")
    return WinRateResult(
        n_items=n,
        wins=wins,
        losses=losses,
        ties=ties,
        win_rate_pct=Fraction(100 * (2 * wins + ties), 2 * n),
    )


def parse_rubric_score(item_id: str, criterion: str, raw: str) -> RubricScore:
    match = _SCORE_RE.search(raw)
    if not match:
        raise VerdictError(item_id, f"no SCORE label in judgment: {raw[:120]!r}")
    score = RubricScore(item_id=item_id, criterion=criterion, score=int(match.group(1)))
    score.validate()
    return score


def judge_rubric(
    gateway: LlmGateway,
    judge: ModelEndpoint,
    item: BenchmarkItem,
    output: ModelOutput,
    criterion: str,
    params: GenerationParams = GenerationParams(),
    templates_dir: str | None = None,
) -> RubricScore:
    if criterion not in RUBRIC_CRITERIA:
        raise ConfigError(f"unknown rubric criterion {criterion!r}; expected one of {RUBRIC_CRITERIA}")
    prompt = render(
        load_template(f"rubric_{criterion}", templates_dir),
        query=item.rendered_prompt,
        output=output.text,
    )
    try:
        raw = gateway.complete(user_request(judge, prompt, params))
    except GatewayError as exc:
        raise VerdictError(item.item_id, f"judge call failed: {exc}") from exc
    return parse_rubric_score(item.item_id, criterion, raw)


def majority_verdict(item_id: str, verdicts: Sequence[JudgeVerdict]) -> JudgeVerdict:
    """Merge replicate verdicts for one item by majority; count ties go to tie.

    Replication is optional (default is a single judgment); it only varies
    the presentation order, so disagreement between replicates is itself a
    position-bias signal and collapses to a tie.
    """
    if not verdicts:
        raise ConfigError(f"{item_id}: no replicate verdicts to merge")
    if len(verdicts) == 1:
        return verdicts[0]
    tally: dict[str, int] = {}
    for verdict in verdicts:
        tally[verdict.winner] = tally.get(verdict.winner, 0) + 1
    top = max(tally.values())
    leaders = [winner for winner, count in tally.items() if count == top]
    winner = leaders[0] if len(leaders) == 1 else WINNER_TIE
    return JudgeVerdict(
        item_id=item_id,
        winner=winner,
        raw_judgment=" / ".join(v.winner for v in verdicts),
        position_order=f"replicated_x{len(verdicts)}",
    )


def aggregate(
    results: Sequence,
    group_by: str,
    *,
    lang_by_item: Mapping[str, str] | None = None,
    model_by_item: Mapping[str, str] | None = None,
) -> dict:
    """Group results into a report table.

    * ``language``: verdicts -> per-language win rates plus the unweighted
      Avg across languages.
    * ``criterion``: rubric scores -> per-criterion means plus macro_avg.
    * ``model``: verdicts -> per-model win rates (for runs that judged
      several candidates against the same reference).
    """
    if group_by == "language":
        if lang_by_item is None:
            raise ConfigError("grouping by language needs a lang_by_item mapping")
        table = win_rates_by_language(results, lang_by_item)
        return {
            "per_language": {lang: result.to_record() for lang, result in table.items()},
            "avg_win_rate_pct": float(average_win_rate(table)),
        }
    if group_by == "criterion":
        return macro_average_rubrics(results)
    if group_by == "model":
        if model_by_item is None:
            raise ConfigError("grouping by model needs a model_by_item mapping")
        grouped: dict[str, list[JudgeVerdict]] = {}
        for verdict in results:
            grouped.setdefault(model_by_item[verdict.item_id], []).append(verdict)
        return {model: win_rate(group).to_record() for model, group in sorted(grouped.items())}
    raise ConfigError(f"unknown group_by {group_by!r}; expected language, criterion, or model")


def win_rates_by_language(
    verdicts: Sequence[JudgeVerdict], lang_by_item: Mapping[str, str]
) -> dict[str, WinRateResult]:
    grouped: dict[str, list[JudgeVerdict]] = {}
    for verdict in verdicts:
        grouped.setdefault(lang_by_item[verdict.item_id], []).append(verdict)
    return {lang: win_rate(group) for lang, group in sorted(grouped.items())}


def average_win_rate(per_language: Mapping[str, WinRateResult]) -> Fraction:
    """Unweighted mean across languages (the Avg column convention)."""
    if not per_language:
        raise ConfigError("no per-language results to average")
    rates = [result.win_rate_pct for result in per_language.values()]
    return sum(rates, Fraction(0)) / len(rates)


def macro_average_rubrics(scores: Sequence[RubricScore]) -> dict[str, float]:
    """Mean score per criterion plus the cross-criterion macro average."""
    grouped: dict[str, list[int]] = {}
    for score in scores:
        score.validate()
        grouped.setdefault(score.criterion, []).append(score.score)
    table = {criterion: statistics.fmean(values) for criterion, values in sorted(grouped.items())}
    if table:
        table["macro_avg"] = statistics.fmean(table.values())
    return table


def delta_report(
    left: Mapping[str, WinRateResult], right: Mapping[str, WinRateResult]
) -> dict[str, float]:
    """Per-language differences (right - left), for paired run comparisons."""
    deltas: dict[str, float] = {}
    for lang in sorted(set(left) & set(right)):
        deltas[lang] = float(right[lang].win_rate_pct - left[lang].win_rate_pct)
    return deltas
