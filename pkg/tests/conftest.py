from __future__ import annotations

import json
import random
import threading
from pathlib import Path

import pytest
import yaml

from crossling.gateway import (
    CacheStore,
    ChatRequest,
    GenerationParams,
    LlmGateway,
    ModelEndpoint,
    RetryPolicy,
    TransportError,
)
from crossling.translation import QeClient


class ScriptedChatTransport:
    """Thread-safe scripted transport: responds via a handler function and
    counts calls, tracking peak concurrency."""

    def __init__(self, handler):
        self.handler = handler
        self.calls = 0
        self.in_flight = 0
        self.peak_in_flight = 0
        self._lock = threading.Lock()

    def send(self, req: ChatRequest) -> str:
        with self._lock:
            self.calls += 1
            self.in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self.in_flight)
        try:
            return self.handler(req)
        finally:
            with self._lock:
                self.in_flight -= 1


class ScriptedQeBackend:
    """QE backend driven by a (src, mt) -> float function."""

    def __init__(self, score_fn):
        self.score_fn = score_fn
        self.calls = 0

    def score_batch(self, rows):
        self.calls += 1
        return [self.score_fn(row["src"], row["mt"]) for row in rows]


def length_ratio_score(src: str, mt: str) -> float:
    """Mock QE oracle: normalized length ratio of source and hypothesis."""
    longer = max(len(src), len(mt))
    return min(len(src), len(mt)) / longer if longer else 1.0


@pytest.fixture
def endpoint():
    return ModelEndpoint(model_id="scripted-model", base_url="mock://scripted", role="teacher")


@pytest.fixture
def no_sleep():
    return lambda _delay: None


@pytest.fixture
def make_gateway(tmp_path, no_sleep):
    """Factory: make_gateway(handler) -> (gateway, transport)."""

    def factory(handler, retry: RetryPolicy = RetryPolicy(), subdir: str = "cache"):
        transport = ScriptedChatTransport(handler)
        gateway = LlmGateway(
            cache=CacheStore(tmp_path / subdir),
            transport=transport,
            retry=retry,
            sleep=no_sleep,
        )
        return gateway, transport

    return factory


@pytest.fixture
def make_qe_client(tmp_path, no_sleep):
    """Factory: make_qe_client(score_fn) -> (client, backend)."""

    def factory(score_fn, scorer_id: str = "mock-qe", cached: bool = True):
        backend = ScriptedQeBackend(score_fn)
        client = QeClient(
            backend=backend,
            scorer_id=scorer_id,
            cache=CacheStore(tmp_path / "qe-cache") if cached else None,
            sleep=no_sleep,
        )
        return client, backend

    return factory


@pytest.fixture
def gen_params():
    return GenerationParams()


def transport_error(status=None):
    def handler(_req):
        raise TransportError("scripted failure", status=status)

    return handler


SEED_TOPICS = [
    "the aqueduct system", "alpine soil drainage", "harbor dredging",
    "beekeeping calendars", "cast iron cookware", "tidal flats ecology",
    "rail gauge history", "bread fermentation", "canal lock design",
    "winter sowing schedules",
]


def write_seed_corpus(path: Path, n: int, seed: int = 42) -> None:
    """Record-stream seed file with multi-line formatted passages."""
    rng = random.Random(seed)
    rows = []
    for i in range(n):
        topic = rng.choice(SEED_TOPICS)
        text = (
            f"Passage {i} explains {topic}. It begins with a short overview. "
            f"Key facts follow in order:\n\n- first property of {topic}\n"
            f"- second property of {topic}\n\n"
            f"A closing remark summarizes why {topic} matters."
        )
        rows.append(json.dumps({"text": text}, ensure_ascii=False))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_mock_config(
    directory: Path,
    *,
    passages: int = 10,
    languages: tuple[str, ...] = ("deu", "zho"),
    include_prompt_translator: bool = True,
    strategy_kind: str = "best_of_k",
    extra: dict | None = None,
) -> Path:
    """Full pipeline config wired to the deterministic mock backends."""
    write_seed_corpus(directory / "seeds.jsonl", passages)
    endpoints = [
        {"model_id": "mock-teacher", "base_url": "mock://teacher", "role": "teacher"},
        {"model_id": "mock-mt-a", "base_url": "mock://mt/a", "role": "translator"},
        {"model_id": "mock-mt-b", "base_url": "mock://mt/b", "role": "translator"},
        {"model_id": "mock-mt-c", "base_url": "mock://mt/c", "role": "translator"},
        {"model_id": "mock-judge", "base_url": "mock://judge", "role": "judge"},
        {"model_id": "mock-cand", "base_url": "mock://cand", "role": "candidate"},
        {"model_id": "mock-ref", "base_url": "mock://ref", "role": "candidate"},
    ]
    if include_prompt_translator:
        endpoints.append(
            {"model_id": "mock-prompt-mt", "base_url": "mock://pmt", "role": "prompt-translator"}
        )
    backends = {
        "best_of_k": ["mock-mt-a", "mock-mt-b", "mock-mt-c"],
        "naive": ["mock-mt-a"],
        "random": ["mock-mt-a", "mock-mt-b", "mock-mt-c"],
    }[strategy_kind]
    config = {
        "cache_root": "cache",
        "run_root": "runs",
        "src_lang": "eng",
        "languages": list(languages),
        "max_in_flight": 4,
        "seeds": {"sampling": 1, "benchmark": 1, "judge_order": 1, "selection": 1},
        "seed_corpus": {
            "path": "seeds.jsonl",
            "format": "record-stream",
            "count": passages,
            "min_chars": 1,
            "max_chars": 100000,
            "dedup": True,
        },
        "params": {"temperature": 0.7, "max_tokens": 2048},
        "retry": {"attempts": 5, "base_delay": 1.0, "factor": 2.0},
        "endpoints": endpoints,
        "qe": {"scorer_id": "mock-qe", "base_url": "mock://qe"},
        "strategy": {"kind": strategy_kind, "backends": backends},
        "filter": {"keep_fraction": 0.8, "scope": "per_language", "selection": "top_qe"},
        "directive_template": "respond",
        **(extra or {}),
    }
    path = directory / "config.yaml"
    path.write_text(yaml.safe_dump(config), encoding="utf-8")
    return path
