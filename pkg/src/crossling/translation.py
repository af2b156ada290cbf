"""Stage 3: sentence-level translation with QE scoring.

A response is decomposed losslessly, every sentence segment is translated
by the configured strategy, and the text is rebuilt with all separator
segments kept verbatim. Each sentence gets a quality-estimation score in
[0, 1] regardless of strategy, because stage 4 filters all responses by
the passage-level score; the passage score is the unweighted arithmetic
mean of the sentence scores.

Strategies:

* naive -- one translator backend, one call per sentence.
* best-of-k -- one call per backend per sentence, keep the candidate with
  the highest QE score; ties go to the earlier backend in the configured
  priority order.
* random -- a seeded uniform choice of backend per sentence, regardless of
  quality (ablation baseline).
"""

from __future__ import annotations

import hashlib
import logging
import random
import statistics
import threading
import time
import unicodedata
from dataclasses import dataclass
from typing import Callable, Protocol

from .errors import ConfigError, GatewayError, ProtocolError, TranslationError
from .gateway import (
    CacheStore,
    GenerationParams,
    LlmGateway,
    ModelEndpoint,
    RetryPolicy,
    run_with_retries,
    user_request,
)
from .languages import display_name
from .prompts import load_template, render
from .segmentation import SegmentedText, SentenceSplitter, segment

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QEScore:
    value: float
    scorer_id: str

    def validate(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise ProtocolError(f"QE score out of range [0, 1]: {self.value}")


@dataclass(frozen=True)
class TranslationCandidate:
    backend_id: str
    text: str
    qe: float


@dataclass(frozen=True)
class NaiveStrategy:
    backend: ModelEndpoint
    tag = "naive"

    def validate(self) -> None:
        self.backend.validate()


@dataclass(frozen=True)
class BestOfKStrategy:
    backends: tuple[ModelEndpoint, ...]

    @property
    def k(self) -> int:
        return len(self.backends)

    @property
    def tag(self) -> str:
        return f"best_of_{self.k}"

    def validate(self) -> None:
        if self.k < 2:
            raise ConfigError(f"best-of-k needs at least 2 backends, got {self.k}")
        for backend in self.backends:
            backend.validate()


@dataclass(frozen=True)
class RandomStrategy:
    backends: tuple[ModelEndpoint, ...]
    rng_seed: int = 0
    tag = "random"

    def validate(self) -> None:
        if not self.backends:
            raise ConfigError("random strategy needs at least 1 backend")
        for backend in self.backends:
            backend.validate()


SelectionStrategy = NaiveStrategy | BestOfKStrategy | RandomStrategy


@dataclass(frozen=True)
class TranslatedResponse:
    text: str
    sentence_scores: tuple[float, ...]
    passage_qe: float


class QeBackend(Protocol):
    def score_batch(self, rows: list[dict[str, str]]) -> list[float]: ...


class HttpQeBackend:
    """POSTs a JSON array of {src, mt, src_lang, tgt_lang}; expects a
    parallel JSON array of floats."""

    def __init__(self, base_url: str, auth_env: str | None = None, timeout: float = 60.0):
        self.base_url = base_url
        self.auth_env = auth_env
        self.timeout = timeout
        import requests

        self._session = requests.Session()

    def score_batch(self, rows: list[dict[str, str]]) -> list[float]:
        import os

        import requests

        from .gateway import TransportError

        headers = {"Content-Type": "application/json"}
        if self.auth_env:
            token = os.environ.get(self.auth_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        try:
            resp = self._session.post(self.base_url, json=rows, headers=headers, timeout=self.timeout)
        except requests.Timeout as exc:
            raise TransportError(f"timeout calling QE service: {exc}") from exc
        except requests.RequestException as exc:
            raise TransportError(f"connection failure calling QE service: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"QE service returned HTTP {resp.status_code}", status=resp.status_code)
        payload = resp.json()
        if not isinstance(payload, list) or len(payload) != len(rows):
            raise ProtocolError("QE service response is not a parallel array of scores")
        return [float(v) for v in payload]


class QeClient:
    """Cached, retried access to a quality-estimation backend."""

    def __init__(
        self,
        backend: QeBackend,
        scorer_id: str,
        cache: CacheStore | None = None,
        retry: RetryPolicy = RetryPolicy(),
        sleep: Callable[[float], None] = time.sleep,
        jitter_rng: random.Random | None = None,
    ):
        self.backend = backend
        self.scorer_id = scorer_id
        self.cache = cache
        self.retry = retry
        self._sleep = sleep
        self._jitter_rng = jitter_rng or random.Random()
        self.backend_calls = 0
        self._lock = threading.Lock()

    def _digest(self, src: str, hyp: str, src_lang: str, tgt_lang: str) -> str:
        blob = "\x1f".join(
            (
                self.scorer_id,
                unicodedata.normalize("NFC", src),
                unicodedata.normalize("NFC", hyp),
                src_lang,
                tgt_lang,
            )
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def score(self, src: str, hyp: str, src_lang: str, tgt_lang: str) -> QEScore:
        if not src or not hyp:
            raise ConfigError("QE scoring requires non-empty source and hypothesis")
        digest = self._digest(src, hyp, src_lang, tgt_lang)
        if self.cache is not None:
            cached = self.cache.get(self.scorer_id, digest)
            if cached is not None:
                return QEScore(value=cached["value"], scorer_id=self.scorer_id)
        row = {"src": src, "mt": hyp, "src_lang": src_lang, "tgt_lang": tgt_lang}

        def call() -> float:
            with self._lock:
                self.backend_calls += 1
            values = self.backend.score_batch([row])
            if len(values) != 1:
                raise ProtocolError("QE service returned a mis-sized score array")
            return values[0]

        value, _ = run_with_retries(call, self.retry, self._sleep, self._jitter_rng)
        score = QEScore(value=value, scorer_id=self.scorer_id)
        score.validate()
        if self.cache is not None:
            self.cache.put(self.scorer_id, digest, {"digest": digest, "value": value, **row})
        return score


def qe_score(
    src_sentence: str, hypothesis: str, src_lang: str, tgt_lang: str, backend: QeClient
) -> QEScore:
    return backend.score(src_sentence, hypothesis, src_lang, tgt_lang)


def _random_backend(strategy: RandomStrategy, sentence: str, tgt_lang: str) -> ModelEndpoint:
    # Stable per-sentence choice: independent of processing order and threads.
    blob = f"{strategy.rng_seed}\x1f{sentence}\x1f{tgt_lang}".encode("utf-8")
    index = int.from_bytes(hashlib.sha256(blob).digest()[:8], "big") % len(strategy.backends)
    return strategy.backends[index]


class Translator:
    """Sentence- and response-level translation over the gateway."""

    def __init__(
        self,
        gateway: LlmGateway,
        qe: QeClient,
        params: GenerationParams = GenerationParams(),
        templates_dir: str | None = None,
        splitter: SentenceSplitter | None = None,
    ):
        self.gateway = gateway
        self.qe = qe
        self.params = params
        self.template = load_template("translate", templates_dir)
        self.splitter = splitter

    def _translate_once(self, backend: ModelEndpoint, sentence: str, src_lang: str, tgt_lang: str) -> str:
        prompt = render(
            self.template,
            src=display_name(src_lang),
            tgt=display_name(tgt_lang),
            text=sentence,
        )
        return self.gateway.complete(user_request(backend, prompt, self.params)).strip()

    def translate_sentence(
        self,
        sentence: str,
        src_lang: str,
        tgt_lang: str,
        strategy: SelectionStrategy,
        item_id: str = "?",
    ) -> TranslationCandidate:
        if src_lang == tgt_lang:
            raise ConfigError(f"source and target language are both {src_lang!r}")
        strategy.validate()

        if isinstance(strategy, BestOfKStrategy):
            candidates: list[tuple[ModelEndpoint, str]] = []
            failures: list[str] = []
            for backend in strategy.backends:
                try:
                    candidates.append(
                        (backend, self._translate_once(backend, sentence, src_lang, tgt_lang))
                    )
                except GatewayError as exc:
                    logger.warning("backend %s failed on %s: %s", backend.model_id, item_id, exc)
                    failures.append(f"{backend.model_id}: {exc}")
            if not candidates:
                raise TranslationError(item_id, f"all {strategy.k} candidates failed: {failures}")
            best: TranslationCandidate | None = None
            for backend, text in candidates:
                try:
                    score = self.qe.score(sentence, text, src_lang, tgt_lang)
                except GatewayError as exc:
                    raise TranslationError(item_id, f"QE scoring failed: {exc}") from exc
                # Strict comparison keeps the earlier backend on ties.
                if best is None or score.value > best.qe:
                    best = TranslationCandidate(backend_id=backend.model_id, text=text, qe=score.value)
            assert best is not None
            return best

        backend = (
            strategy.backend
            if isinstance(strategy, NaiveStrategy)
            else _random_backend(strategy, sentence, tgt_lang)
        )
        try:
            text = self._translate_once(backend, sentence, src_lang, tgt_lang)
        except GatewayError as exc:
            raise TranslationError(item_id, f"translation failed: {exc}") from exc
        try:
            score = self.qe.score(sentence, text, src_lang, tgt_lang)
        except GatewayError as exc:
            raise TranslationError(item_id, f"QE scoring failed: {exc}") from exc
        return TranslationCandidate(backend_id=backend.model_id, text=text, qe=score.value)

    def translate_response(
        self,
        response_text: str,
        src_lang: str,
        tgt_lang: str,
        strategy: SelectionStrategy,
        item_id: str = "?",
    ) -> TranslatedResponse:
        """Translate every sentence segment and rebuild the response.

        Any sentence-level failure fails the whole response: a partially
        translated target would poison downstream fine-tuning data.
        """
        if not response_text:
            raise TranslationError(item_id, "response text is empty")
        segmented: SegmentedText = segment(response_text, self.splitter)
        sentences = segmented.sentences()
        if not sentences:
            raise TranslationError(item_id, "response has no sentence segments")
        translations: list[str] = []
        scores: list[float] = []
        for seg in sentences:
            candidate = self.translate_sentence(seg.text, src_lang, tgt_lang, strategy, item_id)
            translations.append(candidate.text)
            scores.append(candidate.qe)
        rebuilt = segmented.replace_sentences(translations)
        return TranslatedResponse(
            text=rebuilt,
            sentence_scores=tuple(scores),
            passage_qe=statistics.fmean(scores),
        )
