"""Run configuration: one structured TOML or JSON file drives every stage.

Relative paths inside the file resolve against the file's directory. The
config hash covers the file as parsed (before path resolution), so moving
a checkout does not invalidate run directories.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .model import DEFAULT_STOP_RELATIONS, Theme

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["PipelineConfig", "load_config", "ConfigError"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MockProviderConfig:
    wiki_file: Path
    llm_script: Path
    embedding_dim: int = 64
    retriever_floor: float = 0.2


@dataclass(frozen=True)
class HttpProviderConfig:
    wiki_api_url: str = "https://en.wikipedia.org/w/api.php"
    llm_api_url: str = ""
    llm_model: str = ""
    embedding_api_url: str = ""
    embedding_model: str = ""
    timeout: float = 30.0
    retries: int = 3
    backoff: float = 1.0


@dataclass(frozen=True)
class PipelineConfig:
    theme: Theme
    docs_dir: Path
    frequency_file: Path

    # ontology
    max_depth: int = 4
    edge_threshold: float = 0.35

    # relation ontology
    parent_levels: int = 1
    stop_relations: frozenset[str] = DEFAULT_STOP_RELATIONS

    # mention mining
    high_frequency_rank: int = 5000
    coherence_cutoff: float = 0.30
    min_cooccurrence: int = 3
    cooccurrence_window: int = 1

    # entity typing
    theme_threshold: float = 0.25
    context_threshold: float = 0.5
    retriever_k: int = 10
    context_radius: int = 1

    # relation extraction
    sentence_window: int = 1
    reprompt_attempts: int = 1

    # assembly
    coreference_threshold: float = 0.85

    # evaluation
    gold_file: Path | None = None
    allowlist_file: Path | None = None
    entity_threshold: float = 0.85
    triple_threshold: float = 0.85
    coherence_threshold: float = 0.30

    # prompt export
    prompt_budget: int = 4000

    # runtime
    workers: int = 1
    cache_dir: Path | None = None

    provider_mode: str = "mock"
    mock_providers: MockProviderConfig | None = None
    http_providers: HttpProviderConfig = field(default_factory=HttpProviderConfig)

    config_hash: str = ""


def _parse_file(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return json.loads(text)
    return tomllib.loads(text)


def _canonical_hash(data: dict) -> str:
    return hashlib.sha256(
        json.dumps(data, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()


def load_config(path: str | Path, *, force_mock: bool = False) -> PipelineConfig:
    path = Path(path)
    try:
        data = _parse_file(path)
    except Exception as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    base = path.parent

    def resolve(value: str | None) -> Path | None:
        if not value:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    try:
        theme_cfg = data["theme"]
        theme = Theme(
            name=theme_cfg["name"],
            description=theme_cfg["description"],
            root_categories=tuple(theme_cfg["roots"]),
        )
        corpus = data["corpus"]
        docs_dir = resolve(corpus["docs_dir"])
        frequency_file = resolve(corpus["frequency_file"])
    except KeyError as exc:
        raise ConfigError(f"config {path} is missing required key: {exc}") from exc

    ontology = data.get("ontology", {})
    relations = data.get("relations", {})
    mining = data.get("mining", {})
    typing = data.get("typing", {})
    extraction = data.get("extraction", {})
    assembly = data.get("assembly", {})
    evaluation = data.get("evaluation", {})
    export = data.get("export", {})
    runtime = data.get("runtime", {})
    providers = data.get("providers", {})

    mode = "mock" if force_mock else providers.get("mode", "mock")
    mock_cfg = None
    if "mock" in providers:
        mock = providers["mock"]
        mock_cfg = MockProviderConfig(
            wiki_file=resolve(mock["wiki_file"]),
            llm_script=resolve(mock["llm_script"]),
            embedding_dim=int(mock.get("embedding_dim", 64)),
            retriever_floor=float(mock.get("retriever_floor", 0.2)),
        )
    if mode == "mock" and mock_cfg is None:
        raise ConfigError(f"config {path}: provider mode is mock but [providers.mock] is absent")
    http = providers.get("http", {})
    http_cfg = HttpProviderConfig(
        wiki_api_url=http.get("wiki_api_url", HttpProviderConfig.wiki_api_url),
        llm_api_url=http.get("llm_api_url", ""),
        llm_model=http.get("llm_model", ""),
        embedding_api_url=http.get("embedding_api_url", ""),
        embedding_model=http.get("embedding_model", ""),
        timeout=float(http.get("timeout", 30.0)),
        retries=int(http.get("retries", 3)),
        backoff=float(http.get("backoff", 1.0)),
    )

    return PipelineConfig(
        theme=theme,
        docs_dir=docs_dir,
        frequency_file=frequency_file,
        max_depth=int(ontology.get("max_depth", 4)),
        edge_threshold=float(ontology.get("edge_threshold", 0.35)),
        parent_levels=int(relations.get("parent_levels", 1)),
        stop_relations=frozenset(
            relations.get("stop_relations", sorted(DEFAULT_STOP_RELATIONS))
        ),
        high_frequency_rank=int(mining.get("high_frequency_rank", 5000)),
        coherence_cutoff=float(mining.get("coherence_cutoff", 0.30)),
        min_cooccurrence=int(mining.get("min_cooccurrence", 3)),
        cooccurrence_window=int(mining.get("cooccurrence_window", 1)),
        theme_threshold=float(typing.get("theme_threshold", 0.25)),
        context_threshold=float(typing.get("context_threshold", 0.5)),
        retriever_k=int(typing.get("retriever_k", 10)),
        context_radius=int(typing.get("context_radius", 1)),
        sentence_window=int(extraction.get("sentence_window", 1)),
        reprompt_attempts=int(extraction.get("reprompt_attempts", 1)),
        coreference_threshold=float(assembly.get("coreference_threshold", 0.85)),
        gold_file=resolve(evaluation.get("gold_file")),
        allowlist_file=resolve(evaluation.get("allowlist_file")),
        entity_threshold=float(evaluation.get("entity_threshold", 0.85)),
        triple_threshold=float(evaluation.get("triple_threshold", 0.85)),
        coherence_threshold=float(evaluation.get("coherence_threshold", 0.30)),
        prompt_budget=int(export.get("prompt_budget", 4000)),
        workers=int(runtime.get("workers", 1)),
        cache_dir=resolve(runtime.get("cache_dir")),
        provider_mode=mode,
        mock_providers=mock_cfg,
        http_providers=http_cfg,
        # The effective provider mode is part of the identity: a mock run
        # and an http run must never share a run directory silently.
        config_hash=_canonical_hash({"config": data, "mode": mode}),
    )
