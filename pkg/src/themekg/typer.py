"""Entity typing: map mentions to their closest ontology category.

Case 1 resolves a mention through a page-title match and scores the page's
categories; Case 2 falls back to context-consistency over the ontology and
then to fast category retrieval. Both score candidates with the product of
self coherence and theme coherence after a theme-relevance filter.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import Document, EntityOntology, MentionCase, Theme, TypedMention
from .ontology import attach_closest
from .providers import (
    CandidateCategoryRetriever,
    ContextTypingProvider,
    EmbeddingProvider,
    WikiCategoryProvider,
)

__all__ = [
    "cosine",
    "self_coherence",
    "theme_coherence",
    "TypingConfig",
    "type_by_page",
    "type_by_context",
    "type_mention",
    "mention_context",
    "NO_PAGE",
]

log = logging.getLogger(__name__)

# Sentinel distinguishing "no page found" from an irrelevant verdict.
NO_PAGE = object()


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity with explicit normalization, so positively scaled
    inputs give identical scores."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = float(np.linalg.norm(a) * np.linalg.norm(b))
    if denom == 0.0:
        raise ValueError("cosine undefined for zero-length vectors")
    return float(np.dot(a, b) / denom)


def self_coherence(category: str, entity: str, embedder: EmbeddingProvider) -> float:
    """How well an entity string matches a category name, in [-1, 1]."""
    if not category.strip() or not entity.strip():
        raise ValueError("self coherence needs nonempty strings")
    return cosine(embedder.embed(category), embedder.embed(entity))


def theme_coherence(text: str, theme: Theme, embedder: EmbeddingProvider) -> float:
    """How well any text matches the theme description, in [-1, 1]."""
    if not text.strip():
        raise ValueError("theme coherence needs a nonempty string")
    return cosine(embedder.embed(text), embedder.embed(theme.description))


@dataclass(frozen=True)
class TypingConfig:
    theme_threshold: float = 0.25
    context_threshold: float = 0.5
    retriever_k: int = 10
    max_depth: int = 4


def _pick_category(
    candidates: list[str],
    entity: str,
    theme: Theme,
    embedder: EmbeddingProvider,
    theme_threshold: float,
) -> tuple[str, float, float] | None:
    """Theme-filter candidates, then take the argmax of C_self * C_theme.

    Returns (category, self_coherence, theme_coherence) or None when every
    candidate fails the theme filter. Ties break toward the
    lexicographically smaller category name.
    """
    scored = []
    for category in dict.fromkeys(candidates):
        c_theme = theme_coherence(category, theme, embedder)
        if c_theme < theme_threshold:
            continue
        c_self = self_coherence(category, entity, embedder)
        scored.append((-(c_self * c_theme), category, c_self, c_theme))
    if not scored:
        return None
    scored.sort()
    _, category, c_self, c_theme = scored[0]
    return category, c_self, c_theme


def type_by_page(
    surface: str,
    doc_id: str,
    span: tuple[int, int],
    theme: Theme,
    *,
    wiki: WikiCategoryProvider,
    embedder: EmbeddingProvider,
    config: TypingConfig = TypingConfig(),
):
    """Case 1. Returns a TypedMention, or NO_PAGE when the mention has no
    page and Case 2 should run."""
    title = wiki.page_title(surface)
    if title is None:
        return NO_PAGE
    candidates = wiki.page_categories(title)
    picked = _pick_category(candidates, title, theme, embedder, config.theme_threshold)
    if picked is None:
        return TypedMention(
            surface=surface, doc_id=doc_id, span=span,
            entity_name=title, category=None, case=MentionCase.IRRELEVANT,
        )
    category, c_self, c_theme = picked
    return TypedMention(
        surface=surface, doc_id=doc_id, span=span,
        entity_name=title, category=category, case=MentionCase.PAGE_MATCH,
        self_coherence=c_self, theme_coherence=c_theme,
    )


def _clean_surface(surface: str) -> str:
    return " ".join(surface.split())


def type_by_context(
    surface: str,
    doc_id: str,
    span: tuple[int, int],
    context: str,
    eo: EntityOntology,
    theme: Theme,
    *,
    typing_provider: ContextTypingProvider,
    retriever: CandidateCategoryRetriever,
    embedder: EmbeddingProvider,
    config: TypingConfig = TypingConfig(),
) -> TypedMention:
    """Case 2: context consistency over the ontology, then retrieval."""
    entity = _clean_surface(surface)
    scores = sorted(
        (-typing_provider.consistency(entity, context, category), category)
        for category in eo.category_names()
    )
    if scores and -scores[0][0] >= config.context_threshold:
        category = scores[0][1]
        return TypedMention(
            surface=surface, doc_id=doc_id, span=span,
            entity_name=entity, category=category, case=MentionCase.CONTEXT_TYPED,
        )

    candidates = retriever.retrieve(entity, context, config.retriever_k)
    if len(candidates) != len(set(candidates)):
        raise ValueError("retriever returned duplicate categories")
    picked = _pick_category(candidates, entity, theme, embedder, config.theme_threshold)
    if picked is None:
        return TypedMention(
            surface=surface, doc_id=doc_id, span=span,
            entity_name=entity, category=None, case=MentionCase.IRRELEVANT,
        )
    category, c_self, c_theme = picked
    return TypedMention(
        surface=surface, doc_id=doc_id, span=span,
        entity_name=entity, category=category, case=MentionCase.RETRIEVED,
        self_coherence=c_self, theme_coherence=c_theme,
    )


def mention_context(doc: Document, sentence_index: int, radius: int = 1) -> str:
    """The mention's sentence plus `radius` neighbors on each side."""
    lo = max(0, sentence_index - radius)
    hi = min(len(doc.sentences) - 1, sentence_index + radius)
    return " ".join(doc.sentence_text(i) for i in range(lo, hi + 1))


def type_mention(
    surface: str,
    doc_id: str,
    span: tuple[int, int],
    context: str,
    eo: EntityOntology,
    theme: Theme,
    *,
    wiki: WikiCategoryProvider,
    embedder: EmbeddingProvider,
    typing_provider: ContextTypingProvider,
    retriever: CandidateCategoryRetriever,
    config: TypingConfig = TypingConfig(),
) -> TypedMention:
    """Dispatch Case 1 then Case 2; newly chosen categories outside the
    ontology are attached under their most similar existing category."""
    result = type_by_page(
        surface, doc_id, span, theme, wiki=wiki, embedder=embedder, config=config
    )
    if result is NO_PAGE:
        result = type_by_context(
            surface, doc_id, span, context, eo, theme,
            typing_provider=typing_provider, retriever=retriever,
            embedder=embedder, config=config,
        )
    if result.category is not None and result.category not in eo:
        parent = attach_closest(eo, result.category, embedder, max_depth=config.max_depth)
        log.info("ontology expanded: %r attached under %r", result.category, parent)
    return result
