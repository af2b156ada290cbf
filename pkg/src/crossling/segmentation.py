"""Lossless decomposition of text into sentence and separator segments.

The decomposition is the backbone of formatting-preserving translation:
sentence segments get translated, separator segments (whitespace, line
breaks, bullet markers, blank lines) are carried through verbatim, and
concatenating all segments in order always reproduces the original string
byte-exactly.

The default splitter is rule-based: sentences never cross line breaks,
bullet markers and numbered-list markers at line start are separators, and
boundaries inside a line sit after ``.?!`` runs that are followed by
whitespace and an uppercase letter, unless a stop-list marks the preceding
token as an abbreviation. A neural segmentation service can be plugged in
behind the same interface.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Protocol

SENTENCE = "sentence"
SEPARATOR = "separator"

_BULLET_RE = re.compile(r"^(\s*)(?:[-*]\s+|\d{1,3}\.\s+)")
_PUNCT_RUN_RE = re.compile(r"[.!?]+")
_SINGLE_INITIAL_RE = re.compile(r"^[^\W\d_]\.$")

ABBREVIATIONS = frozenset(
    {
        "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "mt.",
        "vs.", "etc.", "e.g.", "i.e.", "cf.", "al.", "fig.", "no.", "vol.",
        "pp.", "dept.", "inc.", "ltd.", "co.", "approx.", "est.",
        "jan.", "feb.", "mar.", "apr.", "jun.", "jul.", "aug.",
        "sep.", "sept.", "oct.", "nov.", "dec.",
        "u.s.", "u.k.", "ph.d.",
    }
)


@dataclass(frozen=True)
class Segment:
    kind: str
    text: str


@dataclass(frozen=True)
class SegmentedText:
    segments: tuple[Segment, ...]

    @property
    def text(self) -> str:
        return "".join(seg.text for seg in self.segments)

    def sentences(self) -> list[Segment]:
        return [seg for seg in self.segments if seg.kind == SENTENCE]

    def separators(self) -> list[Segment]:
        return [seg for seg in self.segments if seg.kind == SEPARATOR]

    def replace_sentences(self, replacements: list[str]) -> str:
        """Rebuild the text with sentence texts swapped out in order."""
        sentence_count = len(self.sentences())
        if len(replacements) != sentence_count:
            raise ValueError(
                f"expected {sentence_count} replacement sentences, got {len(replacements)}"
            )
        parts: list[str] = []
        it = iter(replacements)
        for seg in self.segments:
            parts.append(next(it) if seg.kind == SENTENCE else seg.text)
        return "".join(parts)


class SentenceSplitter(Protocol):
    def segment(self, text: str) -> SegmentedText: ...


class _Builder:
    """Accumulates segments, merging adjacent separators into maximal runs."""

    def __init__(self) -> None:
        self._segments: list[Segment] = []

    def add(self, kind: str, text: str) -> None:
        if not text:
            return
        if (
            kind == SEPARATOR
            and self._segments
            and self._segments[-1].kind == SEPARATOR
        ):
            self._segments[-1] = Segment(SEPARATOR, self._segments[-1].text + text)
        else:
            self._segments.append(Segment(kind, text))

    def finish(self) -> SegmentedText:
        return SegmentedText(tuple(self._segments))


def _is_abbreviation(chunk: str, run_start: int, run_end: int) -> bool:
    token_start = run_start
    while token_start > 0 and not chunk[token_start - 1].isspace():
        token_start -= 1
    token = chunk[token_start:run_end].lstrip("\"'([{").lower()
    if token in ABBREVIATIONS:
        return True
    return bool(_SINGLE_INITIAL_RE.match(token))


def _boundary_end(chunk: str, start: int) -> int | None:
    """Index just past the punctuation run ending the sentence at start, or None."""
    for match in _PUNCT_RUN_RE.finditer(chunk, start):
        end = match.end()
        if end >= len(chunk):
            return None
        if not chunk[end].isspace():
            continue
        follow = end
        while follow < len(chunk) and chunk[follow].isspace():
            follow += 1
        if follow >= len(chunk) or not chunk[follow].isupper():
            continue
        if _is_abbreviation(chunk, match.start(), end):
            continue
        return end
    return None


class RuleBasedSplitter:
    """Default splitter; see the module docstring for the rules."""

    def segment(self, text: str) -> SegmentedText:
        builder = _Builder()
        for raw_line in text.splitlines(keepends=True):
            stripped = raw_line.splitlines()[0] if raw_line else ""
            terminator = raw_line[len(stripped):]
            self._segment_line(builder, stripped)
            builder.add(SEPARATOR, terminator)
        return builder.finish()

    def _segment_line(self, builder: _Builder, line: str) -> None:
        marker = _BULLET_RE.match(line)
        if marker:
            builder.add(SEPARATOR, marker.group(0))
            body = line[marker.end():]
        else:
            body = line
        pos = 0
        while pos < len(body):
            if body[pos].isspace():
                ws_end = pos
                while ws_end < len(body) and body[ws_end].isspace():
                    ws_end += 1
                builder.add(SEPARATOR, body[pos:ws_end])
                pos = ws_end
                continue
            end = _boundary_end(body, pos)
            if end is None:
                content = body[pos:].rstrip()
                builder.add(SENTENCE, content)
                builder.add(SEPARATOR, body[pos + len(content):])
                break
            builder.add(SENTENCE, body[pos:end])
            pos = end


_DEFAULT_SPLITTER = RuleBasedSplitter()


def segment(text: str, splitter: SentenceSplitter | None = None) -> SegmentedText:
    """Decompose text losslessly; the worst case is one sentence segment."""
    return (splitter or _DEFAULT_SPLITTER).segment(text)
