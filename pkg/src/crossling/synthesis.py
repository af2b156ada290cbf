"""Stages 1-2: reverse-instruction generation and criteria-driven refinement.

Stage 1 asks a teacher model for an instruction the seed passage already
answers; the passage itself becomes the response, untouched. Stage 2 asks
the teacher to reword the pair against four fixed criteria while staying
grounded in the original response.

Teacher completions must use labeled envelopes (``INSTRUCTION:`` for
stage 1, ``QUESTION:``/``RESPONSE:`` for stage 2). An item whose envelope
cannot be parsed is dropped and counted, never passed through unrefined.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

from .corpus import SeedPassage
from .errors import GatewayError, SynthesisError
from .gateway import ChatRequest, GenerationParams, LlmGateway, ModelEndpoint, user_request
from .prompts import load_template, parse_labeled_sections, render

logger = logging.getLogger(__name__)

STAGE_GENERATED = "generated"
STAGE_REFINED = "refined"

# The four stage-2 rewording goals. Keys are stable identifiers; the prose
# shipped to the teacher lives in templates/refinement.txt and must name
# every key.
REFINEMENT_CRITERIA = (
    "question_self_sufficiency",
    "response_naturalness",
    "response_precision",
    "response_informativeness",
)

GROUNDING_SENTENCE = "Do not add any of your own knowledge"


@dataclass(frozen=True)
class QAPair:
    id: str
    instruction: str
    response: str
    stage: str
    teacher_model: str

    def validate(self) -> None:
        if not self.instruction or not self.response:
            raise SynthesisError(self.id, "instruction and response must be non-empty")
        if self.stage not in (STAGE_GENERATED, STAGE_REFINED):
            raise SynthesisError(self.id, f"unknown stage {self.stage!r}")

    def to_record(self) -> dict[str, str]:
        return {
            "id": self.id,
            "instruction": self.instruction,
            "response": self.response,
            "stage": self.stage,
            "teacher_model": self.teacher_model,
        }

    @classmethod
    def from_record(cls, record: dict) -> "QAPair":
        return cls(
            id=record["id"],
            instruction=record["instruction"],
            response=record["response"],
            stage=record["stage"],
            teacher_model=record["teacher_model"],
        )


def render_reverse_instruction_prompt(
    passage: SeedPassage, templates_dir: str | None = None
) -> str:
    return render(load_template("reverse_instruction", templates_dir), passage=passage.text)


def render_refinement_prompt(pair: QAPair, templates_dir: str | None = None) -> str:
    prompt = render(
        load_template("refinement", templates_dir),
        question=pair.instruction,
        response=pair.response,
    )
    for criterion in REFINEMENT_CRITERIA:
        if criterion not in prompt:
            raise SynthesisError(pair.id, f"refinement prompt lost criterion {criterion}")
    if GROUNDING_SENTENCE not in prompt:
        raise SynthesisError(pair.id, "refinement prompt lost the grounding instruction")
    return prompt


def _parse_generated(pair_id: str, passage: SeedPassage, completion: str, model_id: str) -> QAPair:
    sections = parse_labeled_sections(completion, ("INSTRUCTION",))
    instruction = sections.get("INSTRUCTION", "")
    if not instruction:
        raise SynthesisError(pair_id, "teacher completion carries no INSTRUCTION: envelope")
    pair = QAPair(
        id=pair_id,
        instruction=instruction,
        response=passage.text,
        stage=STAGE_GENERATED,
        teacher_model=model_id,
    )
    pair.validate()
    return pair


def _parse_refined(pair: QAPair, completion: str, model_id: str) -> QAPair:
    sections = parse_labeled_sections(completion, ("QUESTION", "RESPONSE"))
    question = sections.get("QUESTION", "")
    response = sections.get("RESPONSE", "")
    if not question or not response:
        raise SynthesisError(pair.id, "teacher completion carries no QUESTION:/RESPONSE: envelope")
    refined = replace(
        pair, instruction=question, response=response, stage=STAGE_REFINED, teacher_model=model_id
    )
    refined.validate()
    return refined


def generate_reverse_instruction(
    passage: SeedPassage,
    teacher: ModelEndpoint,
    gateway: LlmGateway,
    params: GenerationParams = GenerationParams(),
    templates_dir: str | None = None,
) -> QAPair:
    """Stage 1 for a single passage; raises SynthesisError on envelope failure."""
    prompt = render_reverse_instruction_prompt(passage, templates_dir)
    try:
        completion = gateway.complete(user_request(teacher, prompt, params))
    except GatewayError as exc:
        raise SynthesisError(passage.id, f"teacher call failed: {exc}") from exc
    return _parse_generated(passage.id, passage, completion, teacher.model_id)


def refine_pair(
    pair: QAPair,
    teacher: ModelEndpoint,
    gateway: LlmGateway,
    params: GenerationParams = GenerationParams(),
    templates_dir: str | None = None,
) -> QAPair:
    """Stage 2 for a single pair; the input pair is left untouched for audit."""
    if pair.stage != STAGE_GENERATED:
        raise SynthesisError(pair.id, f"refine_pair requires stage={STAGE_GENERATED}, got {pair.stage}")
    prompt = render_refinement_prompt(pair, templates_dir)
    try:
        completion = gateway.complete(user_request(teacher, prompt, params))
    except GatewayError as exc:
        raise SynthesisError(pair.id, f"teacher call failed: {exc}") from exc
    return _parse_refined(pair, completion, teacher.model_id)


def _batch_requests(prompts: list[str], teacher: ModelEndpoint, params: GenerationParams) -> list[ChatRequest]:
    return [user_request(teacher, prompt, params) for prompt in prompts]


def generate_batch(
    passages: Sequence[SeedPassage],
    teacher: ModelEndpoint,
    gateway: LlmGateway,
    params: GenerationParams = GenerationParams(),
    max_in_flight: int = 4,
    templates_dir: str | None = None,
) -> tuple[list[QAPair], list[SynthesisError]]:
    """Stage 1 over a batch; len(pairs) + len(errors) == len(passages)."""
    prompts = [render_reverse_instruction_prompt(p, templates_dir) for p in passages]
    completions = gateway.complete_batch(_batch_requests(prompts, teacher, params), max_in_flight)
    pairs: list[QAPair] = []
    errors: list[SynthesisError] = []
    for passage, completion in zip(passages, completions):
        if isinstance(completion, GatewayError):
            errors.append(SynthesisError(passage.id, f"teacher call failed: {completion}"))
            continue
        try:
            pairs.append(_parse_generated(passage.id, passage, completion, teacher.model_id))
        except SynthesisError as exc:
            logger.warning("dropping passage %s: %s", passage.id, exc)
            errors.append(exc)
    return pairs, errors


def refine_batch(
    pairs: Sequence[QAPair],
    teacher: ModelEndpoint,
    gateway: LlmGateway,
    params: GenerationParams = GenerationParams(),
    max_in_flight: int = 4,
    templates_dir: str | None = None,
) -> tuple[list[QAPair], list[SynthesisError]]:
    """Stage 2 over a batch; len(refined) + len(errors) == len(pairs)."""
    refined: list[QAPair] = []
    errors: list[SynthesisError] = []
    eligible: list[QAPair] = []
    prompts: list[str] = []
    for pair in pairs:
        if pair.stage != STAGE_GENERATED:
            errors.append(SynthesisError(pair.id, f"cannot refine a stage={pair.stage} pair"))
            continue
        eligible.append(pair)
        prompts.append(render_refinement_prompt(pair, templates_dir))
    completions = gateway.complete_batch(_batch_requests(prompts, teacher, params), max_in_flight)
    for pair, completion in zip(eligible, completions):
        if isinstance(completion, GatewayError):
            errors.append(SynthesisError(pair.id, f"teacher call failed: {completion}"))
            continue
        try:
            refined.append(_parse_refined(pair, completion, teacher.model_id))
        except SynthesisError as exc:
            logger.warning("dropping pair %s: %s", pair.id, exc)
            errors.append(exc)
    return refined, errors
