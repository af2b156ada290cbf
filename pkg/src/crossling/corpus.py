"""Seed corpus ingestion and deterministic passage sampling.

Two input formats are supported:

* ``plain-lines`` -- one passage per line, UTF-8, newline terminated.
* ``record-stream`` -- one JSON object per line with a required ``text``
  field and optional ``id`` / ``source`` fields.

Sampling is reservoir-based so corpora larger than memory can stream
through, and is a pure function of the stream order and the configured
seed.
"""

from __future__ import annotations

import json
import logging
import random
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ConfigError

logger = logging.getLogger(__name__)

FORMATS = ("plain-lines", "record-stream")


@dataclass(frozen=True)
class SeedPassage:
    id: str
    text: str
    source: str
    lang: str = "eng"


@dataclass(frozen=True)
class SamplingConfig:
    count: int
    rng_seed: int = 0
    min_chars: int = 1
    max_chars: int = 1_000_000
    dedup: bool = True

    def validate(self) -> None:
        if self.count < 1:
            raise ConfigError(f"sampling count must be >= 1, got {self.count}")
        if self.min_chars > self.max_chars:
            raise ConfigError(
                f"min_chars ({self.min_chars}) must not exceed max_chars ({self.max_chars})"
            )


@dataclass
class LoadStats:
    """Mutable counters filled in while a load_seed stream is consumed."""

    read: int = 0
    yielded: int = 0
    skipped: int = 0


@dataclass
class SampleResult:
    passages: list[SeedPassage]
    requested: int
    eligible: int
    duplicates_removed: int = 0

    @property
    def shortfall(self) -> int:
        return max(0, self.requested - len(self.passages))


def _normalized(text: str) -> str:
    return unicodedata.normalize("NFC", text.strip())


def load_seed(
    path: str | Path,
    format: str = "plain-lines",
    lang: str = "eng",
    stats: LoadStats | None = None,
) -> Iterator[SeedPassage]:
    """Stream passages from a seed file in file order.

    Ids default to ``<source>:<ordinal>`` where ordinal counts emitted
    passages. Blank lines and malformed records are skipped and counted in
    ``stats``; an unreadable path raises OSError before the first yield.
    """
    if format not in FORMATS:
        raise ConfigError(f"unknown seed format {format!r}; expected one of {FORMATS}")
    path = Path(path)
    if stats is None:
        stats = LoadStats()
    source = path.name
    seen_ids: set[str] = set()

    with open(path, "r", encoding="utf-8") as fh:
        ordinal = 0
        for line_no, line in enumerate(fh):
            stats.read += 1
            if format == "plain-lines":
                text = line.strip()
                if not text:
                    stats.skipped += 1
                    continue
                passage = SeedPassage(id=f"{source}:{ordinal}", text=text, source=source, lang=lang)
            else:
                try:
                    record = json.loads(line)
                except json.JSONDecodeError:
                    logger.warning("%s line %d: malformed JSON record, skipping", source, line_no)
                    stats.skipped += 1
                    continue
                text = record.get("text")
                if not isinstance(text, str) or not text.strip():
                    logger.warning("%s line %d: missing or empty text field, skipping", source, line_no)
                    stats.skipped += 1
                    continue
                pid = record.get("id")
                pid = str(pid) if pid is not None else f"{source}:{ordinal}"
                passage = SeedPassage(
                    id=pid,
                    text=text,
                    source=str(record.get("source", source)),
                    lang=lang,
                )
            if passage.id in seen_ids:
                logger.warning("%s line %d: duplicate id %s, skipping", source, line_no, passage.id)
                stats.skipped += 1
                continue
            seen_ids.add(passage.id)
            stats.yielded += 1
            ordinal += 1
            yield passage


def sample_passages(stream: Iterable[SeedPassage], cfg: SamplingConfig) -> SampleResult:
    """Draw a deterministic reservoir sample from the eligible passages.

    Eligibility is min_chars <= len(text) <= max_chars, lengths measured in
    Unicode scalar values. With dedup, only the first occurrence of each
    normalized (NFC, trimmed) text is eligible. The returned list is sorted
    by id for stable downstream ordering.
    """
    cfg.validate()
    rng = random.Random(cfg.rng_seed)
    reservoir: list[SeedPassage] = []
    seen_texts: set[str] = set()
    eligible = 0
    duplicates = 0

    for passage in stream:
        if not (cfg.min_chars <= len(passage.text) <= cfg.max_chars):
            continue
        if cfg.dedup:
            key = _normalized(passage.text)
            if key in seen_texts:
                duplicates += 1
                continue
            seen_texts.add(key)
        # Algorithm R: every eligible passage lands in the reservoir with
        # probability count/eligible, deterministically for a fixed seed.
        if eligible < cfg.count:
            reservoir.append(passage)
        else:
            j = rng.randint(0, eligible)
            if j < cfg.count:
                reservoir[j] = passage
        eligible += 1

    reservoir.sort(key=lambda p: p.id)
    result = SampleResult(
        passages=reservoir,
        requested=cfg.count,
        eligible=eligible,
        duplicates_removed=duplicates,
    )
    if result.shortfall:
        logger.info(
            "sampled %d of %d requested passages (eligible=%d, duplicates_removed=%d)",
            len(reservoir), cfg.count, eligible, duplicates,
        )
    return result
