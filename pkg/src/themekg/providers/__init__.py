"""Pluggable interfaces for every external capability the pipeline uses.

Each interface has an HTTP-backed production implementation (see
``themekg.providers.http``) and a deterministic offline mock (see
``themekg.providers.mocks``) used by the test suite and the
``--mock-providers`` CLI flag.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProviderError",
    "UnknownCategoryError",
    "EmbeddingProvider",
    "LlmProvider",
    "WikiCategoryProvider",
    "PosTagger",
    "ContextTypingProvider",
    "CandidateCategoryRetriever",
    "ProviderBundle",
]


class ProviderError(RuntimeError):
    """A provider call failed after retries; names the provider."""

    def __init__(self, provider: str, message: str):
        super().__init__(f"{provider}: {message}")
        self.provider = provider


class UnknownCategoryError(ProviderError):
    """The queried category does not exist on the backing source."""


class EmbeddingProvider(ABC):
    """Maps text to a unit-norm vector of fixed dimension."""

    @abstractmethod
    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError


class LlmProvider(ABC):
    """Text completion; decoding is pinned to temperature 0 for replayability."""

    @abstractmethod
    def complete(self, prompt: str) -> str:
        raise NotImplementedError


class WikiCategoryProvider(ABC):
    """Category tree and page lookups against a wiki-style source."""

    @abstractmethod
    def children(self, category: str) -> list[str]:
        """Subcategory names; never includes the queried category itself."""
        raise NotImplementedError

    @abstractmethod
    def page_title(self, title: str) -> str | None:
        """Canonical page title for a (possibly differently cased) title."""
        raise NotImplementedError

    @abstractmethod
    def page_categories(self, title: str) -> list[str]:
        raise NotImplementedError

    def page_exists(self, title: str) -> bool:
        return self.page_title(title) is not None


class PosTagger(ABC):
    """Part-of-speech tagging and noun chunking for a single sentence."""

    @abstractmethod
    def tag(self, sentence: str) -> list[tuple[str, str]]:
        raise NotImplementedError

    @abstractmethod
    def noun_chunks(self, sentence: str) -> list[tuple[int, int]]:
        """Non-overlapping, ordered chunk spans within the sentence."""
        raise NotImplementedError


class ContextTypingProvider(ABC):
    """Consistency score between an in-context entity and a category."""

    @abstractmethod
    def consistency(self, entity: str, context: str, category: str) -> float:
        raise NotImplementedError


class CandidateCategoryRetriever(ABC):
    """Fast retrieval of candidate categories for an in-context mention."""

    @abstractmethod
    def retrieve(self, mention: str, context: str, k: int) -> list[str]:
        raise NotImplementedError


@dataclass
class ProviderBundle:
    """Everything the pipeline needs, bundled so stages share one wiring."""

    embedding: EmbeddingProvider
    llm: LlmProvider
    wiki: WikiCategoryProvider
    tagger: PosTagger
    typing: ContextTypingProvider
    retriever: CandidateCategoryRetriever
