"""Relation ontology: LLM-generated candidate relations per ordered
category pair, a lenient parser for the list-format replies, and candidate
retrieval with parent-pair merging.

The guiding assumption is that relations possible between two entities are
a subset of the relations possible between their categories, so candidates
generated at the category level bound what extraction may select.
"""

from __future__ import annotations

import json
import logging
import re
from pathlib import Path

from .model import (
    DEFAULT_STOP_RELATIONS,
    NONE_PHRASE,
    NONE_RELATION,
    PROVENANCE_ENRICHED,
    PROVENANCE_GENERATED,
    EntityOntology,
    RelationOntology,
    RelationPhrase,
    Theme,
    normalize,
)
from .providers import LlmProvider

__all__ = [
    "relation_prompt",
    "generate_relations",
    "parse_relation_lines",
    "retrieve_candidates",
    "enrich",
    "export_relations",
    "import_relations",
]

log = logging.getLogger(__name__)

RELATION_PROMPT = (
    "Given the theme {theme}, what are the possible relations from "
    "{cat1} to {cat2}? List Answers in the format: ({cat1}, ___ , {cat2})"
)

_PAREN_LINE = re.compile(r"\(([^()]*)\)")


def relation_prompt(theme: Theme, cat1: str, cat2: str) -> str:
    return RELATION_PROMPT.format(theme=theme.name, cat1=cat1, cat2=cat2)


def _singular(token: str) -> str:
    if len(token) > 3 and token.endswith("ies"):
        return token[:-3] + "y"
    if len(token) > 3 and token.endswith("s") and not token.endswith("ss"):
        return token[:-1]
    return token


def _category_matches(field: str, expected: str) -> bool:
    """Case-insensitive match, tolerant of simple plural forms."""
    a, b = normalize(field), normalize(expected)
    if a == b:
        return True
    return [_singular(t) for t in a.split()] == [_singular(t) for t in b.split()]


def parse_relation_lines(
    raw: str,
    pair: tuple[str, str],
    stop_relations: frozenset[str] = DEFAULT_STOP_RELATIONS,
) -> list[RelationPhrase]:
    """Extract relation phrases from list-format LLM output.

    Accepts lines shaped like "(cat1, relation, cat2)" whose outer fields
    match the queried direction; everything else is ignored. Duplicate and
    stop-listed relations are dropped. Never fabricates text: every phrase
    is a substring of the raw reply.
    """
    cat1, cat2 = pair
    phrases: list[RelationPhrase] = []
    seen: set[str] = set()
    for line in raw.splitlines():
        m = _PAREN_LINE.search(line)
        if not m:
            continue
        parts = [p.strip() for p in m.group(1).split(",")]
        if len(parts) < 3:
            log.debug("unparseable relation line ignored: %r", line)
            continue
        first, middle, last = parts[0], ", ".join(parts[1:-1]), parts[-1]
        if not _category_matches(first, cat1) or not _category_matches(last, cat2):
            continue
        norm = normalize(middle)
        if not norm or norm == NONE_RELATION:
            continue
        if norm in stop_relations:
            log.debug("stop relation dropped: %r", middle)
            continue
        if norm in seen:
            continue
        seen.add(norm)
        phrases.append(RelationPhrase(middle))
    return phrases


def generate_relations(
    theme: Theme,
    pair: tuple[str, str],
    *,
    llm: LlmProvider,
    ro: RelationOntology,
    stop_relations: frozenset[str] = DEFAULT_STOP_RELATIONS,
) -> set[RelationPhrase]:
    """Query the LLM for candidate relations of an ordered category pair.

    Both directions are queried and stored; already-generated directions
    (including explicitly empty ones) are never re-queried.
    """
    cat1, cat2 = pair
    directions = [(cat1, cat2)] if cat1 == cat2 else [(cat1, cat2), (cat2, cat1)]
    for direction in directions:
        if ro.has_entry(direction):
            continue
        raw = llm.complete(relation_prompt(theme, *direction))
        parsed = parse_relation_lines(raw, direction, stop_relations)
        if not parsed:
            ro.mark_empty(direction)
            log.debug("no relations generated for %r", direction)
        for phrase in parsed:
            ro.add(direction, phrase, PROVENANCE_GENERATED)
    return {phrase for phrase, _ in ro.phrases(pair)}


def retrieve_candidates(
    ro: RelationOntology,
    eo: EntityOntology,
    pair: tuple[str, str],
    *,
    theme: Theme,
    llm: LlmProvider,
    parent_levels: int = 1,
    stop_relations: frozenset[str] = DEFAULT_STOP_RELATIONS,
) -> list[RelationPhrase]:
    """Candidates for a pair, merged with its parent-pair candidates.

    The union covers (E1, E2) and every combination replacing either side
    with a parent category, up to parent_levels levels. Missing pairs are
    generated on demand. Ordering is deterministic: generated phrases
    first, enriched phrases after, the none sentinel last.
    """
    cat1, cat2 = pair

    def lineage(cat: str) -> list[str]:
        out = [cat]
        frontier = [cat]
        for _ in range(parent_levels):
            frontier = sorted({p for c in frontier for p in eo.parents(c)})
            out.extend(frontier)
        return list(dict.fromkeys(out))

    collected: list[tuple[RelationPhrase, str]] = []
    seen: set[str] = set()
    for c1 in lineage(cat1):
        for c2 in lineage(cat2):
            candidate_pair = (c1, c2)
            if not ro.has_entry(candidate_pair):
                generate_relations(
                    theme, candidate_pair, llm=llm, ro=ro, stop_relations=stop_relations
                )
            for phrase, provenance in ro.phrases(candidate_pair):
                if phrase.normalized not in seen:
                    seen.add(phrase.normalized)
                    collected.append((phrase, provenance))

    generated = [p for p, prov in collected if prov == PROVENANCE_GENERATED]
    enriched = [p for p, prov in collected if prov == PROVENANCE_ENRICHED]
    return generated + enriched + [NONE_PHRASE]


def enrich(
    ro: RelationOntology, pair: tuple[str, str], phrase: RelationPhrase
) -> RelationOntology:
    """Record a relation discovered by fallback extraction; idempotent."""
    if phrase.normalized == NONE_RELATION:
        raise ValueError("the none sentinel cannot enrich the relation ontology")
    ro.add(pair, phrase, PROVENANCE_ENRICHED)
    return ro


def export_relations(ro: RelationOntology, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(ro.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def import_relations(path: str | Path) -> RelationOntology:
    return RelationOntology.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
