"""Content-addressed provider cache, doubling as the run call log.

Entries are keyed by SHA-256 of (provider id, request payload). With a
cache directory the cache persists across runs, which makes runs resumable
and lets a replay provider answer the same run without any backend.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path

import numpy as np

from . import (
    CandidateCategoryRetriever,
    ContextTypingProvider,
    EmbeddingProvider,
    LlmProvider,
    PosTagger,
    ProviderBundle,
    ProviderError,
    WikiCategoryProvider,
)

__all__ = ["ProviderCache", "ReplayMissError", "cached_call", "record_bundle", "replay_bundle"]


class ReplayMissError(ProviderError):
    """Replay was requested for a call that is not in the log."""


def _key(provider_id: str, payload: str) -> str:
    return hashlib.sha256(f"{provider_id}\x00{payload}".encode("utf-8")).hexdigest()


class ProviderCache:
    """Concurrent-read, exclusive-write cache of provider responses."""

    def __init__(self, cache_dir: str | Path | None = None):
        self._dir = Path(cache_dir) if cache_dir else None
        if self._dir:
            self._dir.mkdir(parents=True, exist_ok=True)
        self._memory: dict[str, str] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, provider_id: str, payload: str) -> str | None:
        key = _key(provider_id, payload)
        with self._lock:
            if key in self._memory:
                self.hits += 1
                return self._memory[key]
        if self._dir:
            path = self._dir / key
            if path.exists():
                value = path.read_text(encoding="utf-8")
                with self._lock:
                    self._memory[key] = value
                    self.hits += 1
                return value
        with self._lock:
            self.misses += 1
        return None

    def put(self, provider_id: str, payload: str, response: str) -> None:
        key = _key(provider_id, payload)
        with self._lock:
            self._memory[key] = response
        if self._dir:
            tmp = self._dir / f".{key}.tmp"
            tmp.write_text(response, encoding="utf-8")
            tmp.replace(self._dir / key)

    def stats(self) -> dict[str, int]:
        with self._lock:
            return {"hits": self.hits, "misses": self.misses, "entries": len(self._memory)}


def cached_call(cache: ProviderCache | None, provider_id: str, payload: str, compute):
    """Round-trip one call through the cache; responses are JSON strings."""
    if cache is None:
        return compute()
    hit = cache.get(provider_id, payload)
    if hit is not None:
        return json.loads(hit)
    value = compute()
    cache.put(provider_id, payload, json.dumps(value))
    return value


class _RecordingEmbedding(EmbeddingProvider):
    def __init__(self, inner: EmbeddingProvider, cache: ProviderCache):
        self._inner, self._cache = inner, cache

    def embed(self, text: str) -> np.ndarray:
        payload = json.dumps({"text": text})
        values = cached_call(
            self._cache, "embedding", payload, lambda: self._inner.embed(text).tolist()
        )
        return np.asarray(values, dtype=np.float64)


class _RecordingLlm(LlmProvider):
    def __init__(self, inner: LlmProvider, cache: ProviderCache):
        self._inner, self._cache = inner, cache

    def complete(self, prompt: str) -> str:
        payload = json.dumps({"prompt": prompt, "temperature": 0.0})
        return cached_call(self._cache, "llm", payload, lambda: self._inner.complete(prompt))


class _RecordingWiki(WikiCategoryProvider):
    def __init__(self, inner: WikiCategoryProvider, cache: ProviderCache):
        self._inner, self._cache = inner, cache

    def children(self, category: str) -> list[str]:
        payload = json.dumps({"children": category})
        return cached_call(self._cache, "wiki", payload, lambda: self._inner.children(category))

    def page_title(self, title: str) -> str | None:
        payload = json.dumps({"page_title": title})
        return cached_call(self._cache, "wiki", payload, lambda: self._inner.page_title(title))

    def page_categories(self, title: str) -> list[str]:
        payload = json.dumps({"page_categories": title})
        return cached_call(
            self._cache, "wiki", payload, lambda: self._inner.page_categories(title)
        )


class _RecordingTagger(PosTagger):
    def __init__(self, inner: PosTagger, cache: ProviderCache):
        self._inner, self._cache = inner, cache

    def tag(self, sentence: str) -> list[tuple[str, str]]:
        payload = json.dumps({"tag": sentence})
        raw = cached_call(
            self._cache, "tagger", payload,
            lambda: [list(pair) for pair in self._inner.tag(sentence)],
        )
        return [(tok, tag) for tok, tag in raw]

    def noun_chunks(self, sentence: str) -> list[tuple[int, int]]:
        payload = json.dumps({"chunks": sentence})
        raw = cached_call(
            self._cache, "tagger", payload,
            lambda: [list(span) for span in self._inner.noun_chunks(sentence)],
        )
        return [(start, end) for start, end in raw]


class _RecordingTyping(ContextTypingProvider):
    def __init__(self, inner: ContextTypingProvider, cache: ProviderCache):
        self._inner, self._cache = inner, cache

    def consistency(self, entity: str, context: str, category: str) -> float:
        payload = json.dumps({"entity": entity, "context": context, "category": category})
        return cached_call(
            self._cache, "typing", payload,
            lambda: self._inner.consistency(entity, context, category),
        )


class _RecordingRetriever(CandidateCategoryRetriever):
    def __init__(self, inner: CandidateCategoryRetriever, cache: ProviderCache):
        self._inner, self._cache = inner, cache

    def retrieve(self, mention: str, context: str, k: int) -> list[str]:
        payload = json.dumps({"mention": mention, "context": context, "k": k})
        return cached_call(
            self._cache, "retriever", payload,
            lambda: self._inner.retrieve(mention, context, k),
        )


def record_bundle(bundle: ProviderBundle, cache: ProviderCache) -> ProviderBundle:
    """Wrap every provider so calls are memoized into the cache."""
    return ProviderBundle(
        embedding=_RecordingEmbedding(bundle.embedding, cache),
        llm=_RecordingLlm(bundle.llm, cache),
        wiki=_RecordingWiki(bundle.wiki, cache),
        tagger=_RecordingTagger(bundle.tagger, cache),
        typing=_RecordingTyping(bundle.typing, cache),
        retriever=_RecordingRetriever(bundle.retriever, cache),
    )


class _Refusing:
    """Stand-in backend that fails loudly if the log is incomplete."""

    def __init__(self, provider: str):
        self._provider = provider

    def __getattr__(self, name):
        def fail(*args, **kwargs):
            raise ReplayMissError(self._provider, f"call {name}{args!r} not in the log")

        return fail


def replay_bundle(cache: ProviderCache) -> ProviderBundle:
    """A bundle answering exclusively from a recorded call log."""
    return ProviderBundle(
        embedding=_RecordingEmbedding(_Refusing("embedding"), cache),  # type: ignore[arg-type]
        llm=_RecordingLlm(_Refusing("llm"), cache),  # type: ignore[arg-type]
        wiki=_RecordingWiki(_Refusing("wiki"), cache),  # type: ignore[arg-type]
        tagger=_RecordingTagger(_Refusing("tagger"), cache),  # type: ignore[arg-type]
        typing=_RecordingTyping(_Refusing("typing"), cache),  # type: ignore[arg-type]
        retriever=_RecordingRetriever(_Refusing("retriever"), cache),  # type: ignore[arg-type]
    )
