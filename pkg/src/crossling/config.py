"""Pipeline configuration: a single YAML document wiring endpoints, seeds,
languages, strategy, filtering, and cache/run locations.

Relative paths inside the file resolve against the file's own directory.
Endpoints whose base_url uses the ``mock://`` scheme are served by the
deterministic offline backends, which makes dry runs and the test suite
independent of any network service.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .corpus import SamplingConfig
from .dataset import FilterConfig
from .errors import ConfigError
from .gateway import (
    CacheStore,
    ChatRequest,
    GenerationParams,
    HttpChatTransport,
    LlmGateway,
    ModelEndpoint,
    RetryPolicy,
)
from .languages import display_name
from .translation import (
    BestOfKStrategy,
    HttpQeBackend,
    NaiveStrategy,
    QeClient,
    RandomStrategy,
    SelectionStrategy,
)

DEFAULT_SEEDS = {"sampling": 1, "benchmark": 1, "judge_order": 1, "selection": 1}


@dataclass
class QeConfig:
    scorer_id: str
    base_url: str
    auth_env: str | None = None


@dataclass
class PipelineConfig:
    config_path: Path
    config_digest: str
    cache_root: Path
    run_root: Path
    src_lang: str
    languages: list[str]
    endpoints: dict[str, ModelEndpoint]
    qe: QeConfig | None
    params: GenerationParams
    retry: RetryPolicy
    seeds: dict[str, int]
    sampling: SamplingConfig
    seed_path: Path | None
    seed_format: str
    filter: FilterConfig
    strategy_kind: str
    strategy_backends: list[str]
    directive_template: str
    templates_dir: str | None
    directive_catalog: str | None
    prompts_path: str | None
    exclusions_path: str | None
    max_in_flight: int = 4
    judge_replicates: int = 1

    def endpoint(self, model_id: str) -> ModelEndpoint:
        try:
            return self.endpoints[model_id]
        except KeyError:
            raise ConfigError(f"no endpoint configured for model_id {model_id!r}") from None

    def endpoint_for_role(self, role: str) -> ModelEndpoint:
        matches = [ep for ep in self.endpoints.values() if ep.role == role]
        if not matches:
            raise ConfigError(f"no endpoint configured for role {role!r}")
        if len(matches) > 1:
            raise ConfigError(
                f"role {role!r} is ambiguous; candidates: {[ep.model_id for ep in matches]}"
            )
        return matches[0]

    def selection_strategy(self) -> SelectionStrategy:
        backends = tuple(self.endpoint(model_id) for model_id in self.strategy_backends)
        for backend in backends:
            if backend.role != "translator":
                raise ConfigError(
                    f"strategy backend {backend.model_id!r} has role {backend.role!r}, "
                    "expected 'translator'"
                )
        if self.strategy_kind == "naive":
            if len(backends) != 1:
                raise ConfigError("naive strategy takes exactly one backend")
            return NaiveStrategy(backend=backends[0])
        if self.strategy_kind == "best_of_k":
            return BestOfKStrategy(backends=backends)
        if self.strategy_kind == "random":
            return RandomStrategy(backends=backends, rng_seed=self.seeds["selection"])
        raise ConfigError(f"unknown strategy kind {self.strategy_kind!r}")


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        raw_bytes = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    raw: dict[str, Any] = yaml.safe_load(raw_bytes) or {}
    base = path.parent

    endpoints: dict[str, ModelEndpoint] = {}
    for entry in raw.get("endpoints", []):
        endpoint = ModelEndpoint(
            model_id=entry["model_id"],
            base_url=entry["base_url"],
            auth_env=entry.get("auth_env"),
            role=entry.get("role", "candidate"),
            timeout=float(entry.get("timeout", 60.0)),
        )
        endpoint.validate()
        if endpoint.model_id in endpoints:
            raise ConfigError(f"duplicate endpoint model_id {endpoint.model_id!r}")
        endpoints[endpoint.model_id] = endpoint

    languages = list(raw.get("languages", []))
    for lang in languages:
        display_name(lang)

    seeds = {**DEFAULT_SEEDS, **{k: int(v) for k, v in (raw.get("seeds") or {}).items()}}

    corpus_raw = raw.get("seed_corpus") or {}
    sampling = SamplingConfig(
        count=int(corpus_raw.get("count", 1)),
        rng_seed=seeds["sampling"],
        min_chars=int(corpus_raw.get("min_chars", 1)),
        max_chars=int(corpus_raw.get("max_chars", 1_000_000)),
        dedup=bool(corpus_raw.get("dedup", True)),
    )
    seed_path = corpus_raw.get("path")

    params_raw = raw.get("params") or {}
    params = GenerationParams(
        temperature=float(params_raw.get("temperature", 0.7)),
        max_tokens=int(params_raw.get("max_tokens", 2048)),
    )
    params.validate()

    retry_raw = raw.get("retry") or {}
    retry = RetryPolicy(
        attempts=int(retry_raw.get("attempts", 5)),
        base_delay=float(retry_raw.get("base_delay", 1.0)),
        factor=float(retry_raw.get("factor", 2.0)),
    )
    retry.validate()

    filter_raw = raw.get("filter") or {}
    filter_cfg = FilterConfig(
        keep_fraction=float(filter_raw.get("keep_fraction", 0.8)),
        scope=filter_raw.get("scope", "per_language"),
        selection=filter_raw.get("selection", "top_qe"),
        rng_seed=seeds["selection"],
    )
    filter_cfg.validate()

    qe_raw = raw.get("qe")
    qe = (
        QeConfig(
            scorer_id=qe_raw["scorer_id"],
            base_url=qe_raw["base_url"],
            auth_env=qe_raw.get("auth_env"),
        )
        if qe_raw
        else None
    )

    strategy_raw = raw.get("strategy") or {}

    benchmark_raw = raw.get("benchmark") or {}

    return PipelineConfig(
        config_path=path,
        config_digest=hashlib.sha256(raw_bytes).hexdigest(),
        cache_root=_resolve(base, raw.get("cache_root", "cache")),
        run_root=_resolve(base, raw.get("run_root", "runs")),
        src_lang=raw.get("src_lang", "eng"),
        languages=languages,
        endpoints=endpoints,
        qe=qe,
        params=params,
        retry=retry,
        seeds=seeds,
        sampling=sampling,
        seed_path=_resolve(base, seed_path) if seed_path else None,
        seed_format=corpus_raw.get("format", "plain-lines"),
        filter=filter_cfg,
        strategy_kind=strategy_raw.get("kind", "naive"),
        strategy_backends=list(strategy_raw.get("backends", [])),
        directive_template=raw.get("directive_template", "respond"),
        templates_dir=str(_resolve(base, raw["templates_dir"])) if raw.get("templates_dir") else None,
        directive_catalog=(
            str(_resolve(base, raw["directive_catalog"])) if raw.get("directive_catalog") else None
        ),
        prompts_path=(
            str(_resolve(base, benchmark_raw["prompts_path"]))
            if benchmark_raw.get("prompts_path")
            else None
        ),
        exclusions_path=(
            str(_resolve(base, benchmark_raw["exclusions_path"]))
            if benchmark_raw.get("exclusions_path")
            else None
        ),
        max_in_flight=int(raw.get("max_in_flight", 4)),
        judge_replicates=max(1, int(raw.get("judge_replicates", 1))),
    )


class _RoutingChatTransport:
    """Dispatches requests to the mock or HTTP transport by URL scheme."""

    def __init__(self) -> None:
        self._http: HttpChatTransport | None = None
        self._mock = None

    def send(self, req: ChatRequest) -> str:
        if req.endpoint.base_url.startswith("mock://"):
            if self._mock is None:
                from .mock_backends import MockChatTransport

                self._mock = MockChatTransport()
            return self._mock.send(req)
        if self._http is None:
            self._http = HttpChatTransport()
        return self._http.send(req)


def build_gateway(config: PipelineConfig) -> LlmGateway:
    return LlmGateway(
        cache=CacheStore(config.cache_root),
        transport=_RoutingChatTransport(),
        retry=config.retry,
    )


def build_qe_client(config: PipelineConfig) -> QeClient:
    if config.qe is None:
        raise ConfigError("no QE backend configured (config key 'qe')")
    cache = CacheStore(config.cache_root)
    if config.qe.base_url.startswith("mock://"):
        from .mock_backends import MockQeBackend

        backend = MockQeBackend()
    else:
        backend = HttpQeBackend(config.qe.base_url, auth_env=config.qe.auth_env)
    return QeClient(backend=backend, scorer_id=config.qe.scorer_id, cache=cache, retry=config.retry)
