"""Deterministic offline backends for ``mock://`` endpoints.

These let the whole pipeline run without any model service: completions
are pure functions of the request content, so reruns hit the cache and
exports are byte-identical. The chat mock recognizes the task by the
envelope contract the bundled prompt templates ask for (INSTRUCTION:,
QUESTION:/RESPONSE:, VERDICT:, SCORE:, or the translation instruction) and
answers in that envelope. Swapping in custom prompt templates may defeat
the detection; mock mode is only meant for the bundled ones.
"""

from __future__ import annotations

import hashlib
import re

from .errors import ProtocolError
from .gateway import ChatRequest, TransportError
from .prompts import parse_labeled_sections

_TRANSLATE_RE = re.compile(r"Translate the following text from (.+?) to (.+?)\.")

# A prompt carrying this marker makes the mock decline with a permanent
# error; lets dry runs and tests exercise per-item failure paths.
FAIL_MARKER = "[mock:fail]"


def _digest(*parts: str) -> int:
    blob = "\x1f".join(parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


def _short_tag(model_id: str) -> str:
    return re.sub(r"[^a-z0-9]+", "", model_id.lower())[-6:] or "mock"


class MockChatTransport:
    """Scripted stand-in for every chat-completion role."""

    def send(self, req: ChatRequest) -> str:
        prompt = req.messages[-1].content
        model_id = req.endpoint.model_id

        if FAIL_MARKER in prompt:
            raise TransportError("mock backend declined this prompt", status=400)
        if "VERDICT:" in prompt:
            return self._judge(prompt, model_id)
        if "SCORE:" in prompt:
            return self._rubric(prompt, model_id)
        match = _TRANSLATE_RE.search(prompt)
        if match:
            return self._translate(prompt, model_id, match.group(2))
        if "INSTRUCTION:" in prompt:
            return self._reverse_instruction(prompt)
        if "ORIGINAL QUESTION" in prompt:
            return self._refine(prompt)
        # Candidate generation: answer the prompt with deterministic filler.
        return self._candidate(prompt, model_id)

    def _reverse_instruction(self, prompt: str) -> str:
        sections = parse_labeled_sections(prompt, ("PASSAGE",))
        passage = sections.get("PASSAGE", "")
        if not passage:
            raise ProtocolError("mock teacher could not find the PASSAGE section")
        lead = " ".join(passage.split()[:6])
        return f"INSTRUCTION: Describe what is known about {lead}".rstrip(".") + "."

    def _refine(self, prompt: str) -> str:
        sections = parse_labeled_sections(prompt, ("ORIGINAL QUESTION", "ORIGINAL RESPONSE"))
        question = sections.get("ORIGINAL QUESTION", "")
        response = sections.get("ORIGINAL RESPONSE", "")
        if not question or not response:
            raise ProtocolError("mock teacher could not find the original pair sections")
        # Grounded no-op rewording: the response stays verbatim.
        return f"QUESTION: {question}\nRESPONSE: {response}"

    def _translate(self, prompt: str, model_id: str, tgt_display: str) -> str:
        sections = parse_labeled_sections(prompt, ("TEXT",))
        text = sections.get("TEXT", "")
        if not text:
            raise ProtocolError("mock translator could not find the TEXT section")
        return f"[{tgt_display.lower()}/{_short_tag(model_id)}] {text}"

    def _judge(self, prompt: str, model_id: str) -> str:
        roll = _digest("judge", model_id, prompt) % 10
        if roll == 0:
            return "VERDICT: TIE"
        return "VERDICT: A" if roll <= 5 else "VERDICT: B"

    def _rubric(self, prompt: str, model_id: str) -> str:
        return f"SCORE: {1 + _digest('rubric', model_id, prompt) % 5}"

    def _candidate(self, prompt: str, model_id: str) -> str:
        tag = _short_tag(model_id)
        stamp = _digest("candidate", model_id, prompt) % 100000
        return (
            f"Mock answer {stamp} from {tag}. "
            f"It addresses the request in {len(prompt)} characters of context."
        )


class MockQeBackend:
    """Hash-based scorer: varied, deterministic, in [0, 1]."""

    def score_batch(self, rows: list[dict[str, str]]) -> list[float]:
        return [
            (_digest("qe", row["src"], row["mt"], row["src_lang"], row["tgt_lang"]) % 10**9)
            / (10**9 - 1)
            for row in rows
        ]
