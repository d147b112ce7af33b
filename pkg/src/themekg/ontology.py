"""Entity ontology construction: breadth-first expansion of the theme's
root categories through the wiki provider, with similarity-filtered edges
and a hard depth cap."""

from __future__ import annotations

import json
import logging
from collections import deque
from pathlib import Path

import numpy as np

from .model import EntityOntology, OntologyError, Theme
from .providers import EmbeddingProvider, UnknownCategoryError, WikiCategoryProvider

__all__ = [
    "build_entity_ontology",
    "filter_edges",
    "expand_with_category",
    "attach_closest",
    "export_ontology",
    "import_ontology",
]

log = logging.getLogger(__name__)


def _similarity(embedder: EmbeddingProvider, a: str, b: str) -> float:
    va = np.asarray(embedder.embed(a), dtype=np.float64)
    vb = np.asarray(embedder.embed(b), dtype=np.float64)
    return float(np.dot(va, vb) / (np.linalg.norm(va) * np.linalg.norm(vb)))


def build_entity_ontology(
    theme: Theme,
    wiki: WikiCategoryProvider,
    embedder: EmbeddingProvider,
    *,
    max_depth: int = 4,
    edge_threshold: float = 0.35,
) -> EntityOntology:
    """BFS from the theme's root categories down to max_depth.

    A candidate edge is kept only when parent and child embed similarly
    enough. The wiki category graph contains cycles; because accepted edges
    always step from depth d to d + 1 (first-visit depth), the result is a
    DAG no matter what the provider returns.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    onto = EntityOntology()
    for root in theme.root_categories:
        try:
            wiki.children(root)
        except UnknownCategoryError:
            raise OntologyError(f"unknown root category: {root!r}")
        onto.add_root(root)

    queue: deque[str] = deque(onto.roots)
    while queue:
        parent = queue.popleft()
        depth = onto.depth(parent) + 1
        if depth > max_depth:
            continue
        try:
            children = wiki.children(parent)
        except UnknownCategoryError:
            continue  # discovered name with no category page of its own
        for child in children:
            if child == parent:
                continue
            if _similarity(embedder, parent, child) < edge_threshold:
                log.debug("edge filtered: %r -> %r", parent, child)
                continue
            if child in onto:
                # Only depth-preserving cross edges keep the DAG acyclic;
                # anything pointing at a shallower node is a back edge.
                if onto.depth(child) == depth:
                    onto.add_child(parent, child)
                continue
            onto.add_child(parent, child)
            queue.append(child)
    onto.validate()
    return onto


def filter_edges(
    onto: EntityOntology,
    threshold: float,
    *,
    embedder: EmbeddingProvider,
) -> EntityOntology:
    """Drop edges below the similarity threshold, then drop everything no
    longer reachable from a root. Depths are preserved: every surviving
    path to a node has the same length it had before."""
    kept = EntityOntology()
    for root in onto.roots:
        kept.add_root(root)
    queue: deque[str] = deque(onto.roots)
    seen = set(onto.roots)
    while queue:
        parent = queue.popleft()
        for child in onto.children(parent):
            if _similarity(embedder, parent, child) < threshold:
                continue
            kept.add_child(parent, child)
            if child not in seen:
                seen.add(child)
                queue.append(child)
    kept.validate()
    return kept


def expand_with_category(
    onto: EntityOntology,
    category: str,
    parent: str,
    *,
    max_depth: int = 4,
) -> EntityOntology:
    """Attach a newly discovered category under an existing parent."""
    if parent not in onto:
        raise OntologyError(f"unknown parent category: {parent!r}")
    if onto.depth(parent) + 1 > max_depth:
        raise OntologyError(
            f"attaching {category!r} under {parent!r} exceeds max depth {max_depth}"
        )
    onto.add_child(parent, category)
    return onto


def attach_closest(
    onto: EntityOntology,
    category: str,
    embedder: EmbeddingProvider,
    *,
    max_depth: int = 4,
) -> str:
    """Attach a category under its most similar existing category.

    Ties break toward the lexicographically smaller parent name so the
    choice is stable across runs. Returns the chosen parent.
    """
    candidates = [
        name for name in onto.category_names() if onto.depth(name) < max_depth
    ]
    if not candidates:
        raise OntologyError("no category shallow enough to accept a new child")
    scored = sorted(
        ((-_similarity(embedder, category, name), name) for name in candidates)
    )
    parent = scored[0][1]
    expand_with_category(onto, category, parent, max_depth=max_depth)
    return parent


def export_ontology(onto: EntityOntology, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(onto.to_dict(), indent=2, sort_keys=False) + "\n", encoding="utf-8"
    )


def import_ontology(path: str | Path) -> EntityOntology:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return EntityOntology.from_dict(data)
