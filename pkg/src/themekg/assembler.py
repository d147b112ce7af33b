"""Graph assembly: merge per-document triples into one ThemeGraph, collapse
coreferent entity names, and serialize the result.

Coreference merging is gated on category compatibility so that high string
similarity alone cannot merge entities from unrelated category branches.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .model import EntityOntology, GraphError, Theme, ThemeGraph, Triple, RelationPhrase, TripleSource
from .providers import EmbeddingProvider
from .typer import cosine, theme_coherence

__all__ = [
    "assemble",
    "export_graph",
    "import_graph",
    "export_prompt_context",
    "GraphParseError",
]

log = logging.getLogger(__name__)


class GraphParseError(ValueError):
    """A graph file line could not be parsed; carries the line number."""

    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.lineno = lineno


def _compatible(
    cats_a: frozenset[str], cats_b: frozenset[str], onto: EntityOntology | None
) -> bool:
    """Categories identical or ancestor-related somewhere across the sets."""
    if cats_a & cats_b:
        return True
    if onto is None:
        return False
    for a in cats_a:
        for b in cats_b:
            if a in onto and b in onto and (onto.is_ancestor(a, b) or onto.is_ancestor(b, a)):
                return True
    return False


def assemble(
    triples: list[Triple],
    *,
    embedder: EmbeddingProvider,
    ontology: EntityOntology | None = None,
    threshold: float = 0.85,
) -> ThemeGraph:
    """Insert all triples, then single-link merge coreferent entity names.

    Two names join a cluster when their embeddings agree at or above the
    threshold and their categories are identical or ancestor-related. The
    cluster's canonical name is its most frequent surface form (ties:
    shorter, then lexicographic). Insertion order does not matter.
    """
    graph = ThemeGraph()
    for triple in triples:
        graph.add_triple(triple)

    names = sorted(graph.entities())
    entity_cats = graph.entities()
    parent = {name: name for name in names}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            if not _compatible(entity_cats[a], entity_cats[b], ontology):
                continue
            if cosine(embedder.embed(a), embedder.embed(b)) < threshold:
                continue
            parent[find(a)] = find(b)

    clusters: dict[str, list[str]] = {}
    for name in names:
        clusters.setdefault(find(name), []).append(name)

    slot_counts: dict[str, int] = {name: 0 for name in names}
    for triple in graph.triples():
        slot_counts[triple.head] += 1
        slot_counts[triple.tail] += 1

    for members in clusters.values():
        if len(members) < 2:
            continue
        canonical = sorted(members, key=lambda n: (-slot_counts[n], len(n), n))[0]
        for member in sorted(members):
            if member != canonical:
                graph.merge_aliases(member, canonical, canonical)
    graph.validate()
    return graph


def _triple_record(triple: Triple) -> dict:
    return {
        "head": triple.head,
        "relation": triple.relation.text,
        "tail": triple.tail,
        "head_category": triple.head_category,
        "tail_category": triple.tail_category,
        "doc_id": min(doc_id for doc_id, _ in triple.provenance),
        "source": triple.source.value,
    }


def export_graph(graph: ThemeGraph, path: str | Path) -> None:
    """JSON lines: one object per triple, then one per alias entry."""
    lines = [json.dumps(_triple_record(t)) for t in graph.triples()]
    lines += [
        json.dumps({"alias": alias, "canonical": canonical})
        for alias, canonical in sorted(graph.alias_map.items())
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def import_graph(path: str | Path) -> ThemeGraph:
    graph = ThemeGraph()
    aliases: list[tuple[str, str, int]] = []
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), 1
    ):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise GraphParseError(path, lineno, f"invalid JSON: {exc}") from exc
        if "alias" in record:
            aliases.append((record["alias"], record["canonical"], lineno))
            continue
        try:
            triple = Triple(
                head=record["head"],
                relation=RelationPhrase(record["relation"]),
                tail=record["tail"],
                head_category=record["head_category"],
                tail_category=record["tail_category"],
                provenance=((record["doc_id"], (0, 0)),),
                source=TripleSource(record["source"]),
            )
        except (KeyError, ValueError) as exc:
            raise GraphParseError(path, lineno, f"bad triple record: {exc}") from exc
        if not graph.add_triple(triple):
            log.warning("%s:%d: duplicate triple line ignored", path, lineno)
    for alias, canonical, lineno in aliases:
        try:
            graph.set_alias(alias, canonical)
        except GraphError as exc:
            raise GraphParseError(path, lineno, str(exc)) from exc
    graph.validate()
    return graph


def export_prompt_context(
    graph: ThemeGraph,
    theme: Theme,
    embedder: EmbeddingProvider,
    budget: int,
) -> str:
    """Render the graph as "(head, relation, tail)" lines, most
    theme-coherent first, truncated to at most `budget` characters."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    scored = sorted(
        (
            (-theme_coherence(t.rendered(), theme, embedder),
             f"({t.head}, {t.relation.text}, {t.tail})")
            for t in graph.triples()
        ),
    )
    lines: list[str] = []
    used = 0
    for _, line in scored:
        cost = len(line) + (1 if lines else 0)
        if used + cost > budget:
            break
        lines.append(line)
        used += cost
    if not lines and len(graph):
        log.warning("prompt budget %d too small for any triple line", budget)
    return "\n".join(lines)
