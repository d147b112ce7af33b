"""Relation extraction over co-occurring typed mentions.

Candidates retrieved from the relation ontology bound what the LLM may
select; a reply outside the candidate set is treated as no relation. Pairs
with no selected relation go through free-form fallback extraction, and
fallback discoveries are fed back into the relation ontology.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .model import (
    DEFAULT_STOP_RELATIONS,
    NONE_RELATION,
    Document,
    EntityOntology,
    MentionCase,
    RelationOntology,
    RelationPhrase,
    Theme,
    Triple,
    TripleSource,
    TypedMention,
    normalize,
)
from .relations import enrich, retrieve_candidates
from .providers import LlmProvider

__all__ = [
    "MentionPair",
    "pair_contexts",
    "select_relation",
    "fallback_extract",
    "extract_document",
    "ExtractionStats",
    "selection_prompt",
    "fallback_prompt",
]

log = logging.getLogger(__name__)

SELECTION_PROMPT = (
    "Please choose the most proper relation in the candidate set for {e1} to {e2} "
    "according to the context. If all the relations in the candidate set are not "
    "suitable, please choose none. The output format should be "
    "(entity1, relation, entity2). Context: {context}. "
    "Relation candidates: [{candidates}]"
)

FALLBACK_PROMPT = (
    "Extract the relation from {e1} to {e2} in the following passage: {context}. "
    "Please output in the format of ({e1}, [relation], {e2}). If no relation from "
    "{e1} to {e2} is identified based on the context, then output none."
)

_PAREN_REPLY = re.compile(r"\(([^()]*)\)")


@dataclass(frozen=True)
class MentionPair:
    head: TypedMention
    tail: TypedMention
    context: str
    context_span: tuple[int, int]


@dataclass
class ExtractionStats:
    pairs: int = 0
    selected: int = 0
    fallback_queries: int = 0
    fallback_triples: int = 0
    errors: int = 0

    @property
    def fallback_rate(self) -> float:
        return self.fallback_queries / self.pairs if self.pairs else 0.0

    def as_dict(self) -> dict:
        return {
            "pairs": self.pairs,
            "selected": self.selected,
            "fallback_queries": self.fallback_queries,
            "fallback_triples": self.fallback_triples,
            "fallback_rate": round(self.fallback_rate, 4),
            "errors": self.errors,
        }


def pair_contexts(
    doc: Document, mentions: list[TypedMention], window: int = 1
) -> list[MentionPair]:
    """Ordered pairs of distinct typed mentions within `window` sentences.

    Both directions are emitted since relations are directional. The
    context is the covering span of the two mentions' sentences. Pairs
    that resolve to the same entity, and repeats of an (entity, entity,
    context) combination, are skipped.
    """
    relevant = [m for m in mentions if m.case is not MentionCase.IRRELEVANT]
    relevant.sort(key=lambda m: m.span)
    pairs: list[MentionPair] = []
    seen: set[tuple[str, str, tuple[int, int]]] = set()
    for m1 in relevant:
        s1 = doc.sentence_index(m1.span[0])
        for m2 in relevant:
            if m1 is m2:
                continue
            if normalize(m1.entity_name) == normalize(m2.entity_name):
                continue
            s2 = doc.sentence_index(m2.span[0])
            if abs(s1 - s2) > window:
                continue
            lo, hi = min(s1, s2), max(s1, s2)
            span = (doc.sentences[lo][0], doc.sentences[hi][1])
            key = (normalize(m1.entity_name), normalize(m2.entity_name), span)
            if key in seen:
                continue
            seen.add(key)
            pairs.append(
                MentionPair(
                    head=m1, tail=m2,
                    context=doc.text[span[0] : span[1]],
                    context_span=span,
                )
            )
    return pairs


def selection_prompt(pair: MentionPair, candidates: list[RelationPhrase]) -> str:
    names = [c.text for c in candidates]
    if not names or normalize(names[-1]) != NONE_RELATION:
        names.append(NONE_RELATION)
    return SELECTION_PROMPT.format(
        e1=pair.head.entity_name,
        e2=pair.tail.entity_name,
        context=pair.context,
        candidates=", ".join(names),
    )


def fallback_prompt(pair: MentionPair) -> str:
    return FALLBACK_PROMPT.format(
        e1=pair.head.entity_name, e2=pair.tail.entity_name, context=pair.context
    )


def _parse_reply(reply: str) -> str | None:
    """Pull the relation out of a "(entity1, relation, entity2)" reply.

    A bare "none" is accepted. Returns None when the reply is unparseable
    (distinct from the NONE_RELATION string, which parses fine).
    """
    if normalize(reply) == NONE_RELATION:
        return NONE_RELATION
    m = _PAREN_REPLY.search(reply)
    if not m:
        return None
    parts = [p.strip() for p in m.group(1).split(",")]
    if len(parts) < 3:
        return None
    return ", ".join(parts[1:-1])


def select_relation(
    pair: MentionPair,
    candidates: list[RelationPhrase],
    llm: LlmProvider,
    *,
    reprompt_attempts: int = 1,
) -> RelationPhrase | None:
    """Ask the LLM to choose one candidate; anything outside the candidate
    set counts as none, which keeps selected relations inside the
    category-level candidate space."""
    real = [c for c in candidates if c.normalized != NONE_RELATION]
    if not real:
        return None
    prompt = selection_prompt(pair, candidates)
    relation_text: str | None = None
    for _ in range(1 + reprompt_attempts):
        relation_text = _parse_reply(llm.complete(prompt))
        if relation_text is not None:
            break
    if relation_text is None:
        log.warning("unparseable relation reply for (%s, %s); treating as none",
                    pair.head.entity_name, pair.tail.entity_name)
        return None
    wanted = normalize(relation_text)
    if wanted == NONE_RELATION:
        return None
    for candidate in real:
        if candidate.normalized == wanted:
            return candidate
    log.warning(
        "LLM picked %r which is not among the candidates for (%s, %s); treating as none",
        relation_text, pair.head.entity_name, pair.tail.entity_name,
    )
    return None


def fallback_extract(
    pair: MentionPair,
    llm: LlmProvider,
    ro: RelationOntology,
    *,
    stop_relations: frozenset[str] = DEFAULT_STOP_RELATIONS,
    reprompt_attempts: int = 1,
) -> Triple | None:
    """Free-form extraction for pairs the candidate set could not cover.

    A discovered relation enriches the relation ontology for the pair's
    categories, so later retrievals for the same categories will offer it.
    """
    prompt = fallback_prompt(pair)
    relation_text: str | None = None
    for _ in range(1 + reprompt_attempts):
        relation_text = _parse_reply(llm.complete(prompt))
        if relation_text is not None:
            break
    if relation_text is None or normalize(relation_text) == NONE_RELATION:
        return None
    try:
        phrase = RelationPhrase.create(relation_text, stop_relations)
    except ValueError:
        log.warning("fallback produced unusable relation %r", relation_text)
        return None
    assert pair.head.category and pair.tail.category
    enrich(ro, (pair.head.category, pair.tail.category), phrase)
    return Triple(
        head=pair.head.entity_name,
        relation=phrase,
        tail=pair.tail.entity_name,
        head_category=pair.head.category,
        tail_category=pair.tail.category,
        provenance=((pair.head.doc_id, pair.context_span),),
        source=TripleSource.FALLBACK_EXTRACTED,
    )


def extract_document(
    doc: Document,
    mentions: list[TypedMention],
    ro: RelationOntology,
    eo: EntityOntology,
    theme: Theme,
    llm: LlmProvider,
    *,
    sentence_window: int = 1,
    parent_levels: int = 1,
    stop_relations: frozenset[str] = DEFAULT_STOP_RELATIONS,
    reprompt_attempts: int = 1,
    stats: ExtractionStats | None = None,
) -> list[Triple]:
    """Candidate retrieval, selection and fallback for every context pair.

    Per-pair failures are logged and skipped so one bad pair cannot sink
    the document.
    """
    stats = stats if stats is not None else ExtractionStats()
    triples: list[Triple] = []
    for pair in pair_contexts(doc, mentions, window=sentence_window):
        stats.pairs += 1
        try:
            candidates = retrieve_candidates(
                ro, eo, (pair.head.category, pair.tail.category),
                theme=theme, llm=llm,
                parent_levels=parent_levels, stop_relations=stop_relations,
            )
            chosen = select_relation(
                pair, candidates, llm, reprompt_attempts=reprompt_attempts
            )
            if chosen is not None:
                stats.selected += 1
                triples.append(
                    Triple(
                        head=pair.head.entity_name,
                        relation=chosen,
                        tail=pair.tail.entity_name,
                        head_category=pair.head.category,
                        tail_category=pair.tail.category,
                        provenance=((doc.doc_id, pair.context_span),),
                        source=TripleSource.ONTOLOGY_SELECTED,
                    )
                )
                continue
            stats.fallback_queries += 1
            fallback = fallback_extract(
                pair, llm, ro,
                stop_relations=stop_relations, reprompt_attempts=reprompt_attempts,
            )
            if fallback is not None:
                stats.fallback_triples += 1
                triples.append(fallback)
        except Exception:
            stats.errors += 1
            log.exception(
                "extraction failed for pair (%s, %s) in %s",
                pair.head.entity_name, pair.tail.entity_name, doc.doc_id,
            )
    return triples
