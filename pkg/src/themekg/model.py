"""Core domain types: themes, documents, the category ontology, relation
phrases, typed mentions, triples, and the mutable theme graph.

Everything except ThemeGraph is an immutable value object. ThemeGraph is
single-writer: one thread mutates, snapshots are cheap to share.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Iterator

__all__ = [
    "NONE_RELATION",
    "DEFAULT_STOP_RELATIONS",
    "Theme",
    "Document",
    "segment_sentences",
    "Category",
    "EntityOntology",
    "OntologyError",
    "RelationPhrase",
    "RelationOntology",
    "MentionCase",
    "TypedMention",
    "TripleSource",
    "Triple",
    "ThemeGraph",
    "GraphError",
    "normalize",
]

# Explicit no-relation option appended to every candidate set.
NONE_RELATION = "none"

# Bare copulas rejected as relation phrases; callers may override.
DEFAULT_STOP_RELATIONS = frozenset({"is", "has", "are", "be", "have", "was", "were"})

_WS_RE = re.compile(r"\s+")
_PUNCT = string.punctuation + string.whitespace


def normalize(text: str) -> str:
    """Canonical string identity: unicode lowercase, collapsed whitespace,
    leading/trailing punctuation stripped."""
    collapsed = _WS_RE.sub(" ", text.casefold()).strip()
    return collapsed.strip(_PUNCT)


class GraphError(ValueError):
    """Raised when a graph operation violates an invariant."""


class OntologyError(ValueError):
    """Raised when an ontology operation violates an invariant."""


@dataclass(frozen=True)
class Theme:
    """A theme label, its one-to-three sentence description (the embedding
    target for coherence scores), and the category names seeding the
    entity ontology."""

    name: str
    description: str
    root_categories: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise ValueError("theme name must be nonempty")
        if not self.description.strip():
            raise ValueError("theme description must be nonempty")
        roots = tuple(self.root_categories)
        if not roots:
            raise ValueError("theme needs at least one root category")
        if len({normalize(r) for r in roots}) != len(roots):
            raise ValueError("root categories must be duplicate-free")
        object.__setattr__(self, "root_categories", roots)


_SENT_BOUNDARY = re.compile(r"(?<=[.!?])\s+")


def segment_sentences(text: str) -> tuple[tuple[int, int], ...]:
    """Split text into sentence spans on ./!/? followed by whitespace.

    Spans are (start, end) offsets into the original text, ordered and
    non-overlapping; surrounding whitespace is excluded.
    """
    spans: list[tuple[int, int]] = []
    pos = 0
    for m in _SENT_BOUNDARY.finditer(text):
        spans.append((pos, m.start()))
        pos = m.end()
    if pos < len(text):
        spans.append((pos, len(text)))
    out = []
    for start, end in spans:
        chunk = text[start:end]
        lead = len(chunk) - len(chunk.lstrip())
        trail = len(chunk) - len(chunk.rstrip())
        if start + lead < end - trail:
            out.append((start + lead, end - trail))
    return tuple(out)


@dataclass(frozen=True)
class Document:
    """A raw document plus its sentence segmentation (offsets into text)."""

    doc_id: str
    text: str
    sentences: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be nonempty")
        prev_end = 0
        for start, end in self.sentences:
            if start < prev_end or end <= start or end > len(self.text):
                raise ValueError(
                    f"{self.doc_id}: bad sentence span ({start}, {end})"
                )
            prev_end = end

    @classmethod
    def from_text(cls, doc_id: str, text: str) -> "Document":
        return cls(doc_id=doc_id, text=text, sentences=segment_sentences(text))

    def sentence_text(self, index: int) -> str:
        start, end = self.sentences[index]
        return self.text[start:end]

    def sentence_index(self, offset: int) -> int:
        """Sentence containing the given character offset."""
        for i, (start, end) in enumerate(self.sentences):
            if start <= offset < end:
                return i
        raise ValueError(f"{self.doc_id}: offset {offset} outside any sentence")


@dataclass(frozen=True)
class Category:
    """A category node with its distance from the nearest root."""

    name: str
    depth: int

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise ValueError("category name must be nonempty")
        if self.depth < 0:
            raise ValueError("category depth must be non-negative")


class EntityOntology:
    """Rooted DAG of categories with parent/child edges.

    Edges always go from depth d to depth d + 1, which keeps the graph
    acyclic by construction; depth equals the shortest distance from a root.
    """

    def __init__(self) -> None:
        self._categories: dict[str, Category] = {}
        self._children: dict[str, list[str]] = {}
        self._parents: dict[str, list[str]] = {}
        self._roots: list[str] = []

    @property
    def roots(self) -> tuple[str, ...]:
        return tuple(self._roots)

    def category_names(self) -> tuple[str, ...]:
        return tuple(self._categories)

    def categories(self) -> tuple[Category, ...]:
        return tuple(self._categories.values())

    def edges(self) -> tuple[tuple[str, str], ...]:
        return tuple(
            (parent, child)
            for parent, children in self._children.items()
            for child in children
        )

    def __contains__(self, name: str) -> bool:
        return name in self._categories

    def __len__(self) -> int:
        return len(self._categories)

    def depth(self, name: str) -> int:
        return self._categories[name].depth

    def parents(self, name: str) -> tuple[str, ...]:
        if name not in self._categories:
            raise OntologyError(f"unknown category: {name!r}")
        return tuple(self._parents.get(name, ()))

    def children(self, name: str) -> tuple[str, ...]:
        if name not in self._categories:
            raise OntologyError(f"unknown category: {name!r}")
        return tuple(self._children.get(name, ()))

    def add_root(self, name: str) -> None:
        if name in self._categories:
            raise OntologyError(f"category already present: {name!r}")
        self._categories[name] = Category(name, 0)
        self._roots.append(name)

    def add_child(self, parent: str, child: str) -> None:
        """Attach child under parent at depth parent+1.

        The child may already exist under another parent, but only at the
        same depth; edges must stay strictly depth-increasing.
        """
        if parent not in self._categories:
            raise OntologyError(f"unknown parent category: {parent!r}")
        depth = self._categories[parent].depth + 1
        existing = self._categories.get(child)
        if existing is not None:
            if existing.depth != depth:
                raise OntologyError(
                    f"cannot attach {child!r} at depth {depth}; "
                    f"already present at depth {existing.depth}"
                )
            if child in self._children.get(parent, ()):
                return
        else:
            self._categories[child] = Category(child, depth)
        self._children.setdefault(parent, []).append(child)
        self._parents.setdefault(child, []).append(parent)

    def is_ancestor(self, ancestor: str, name: str) -> bool:
        """True if ancestor lies on some parent path above name."""
        seen = set()
        stack = list(self._parents.get(name, ()))
        while stack:
            cur = stack.pop()
            if cur == ancestor:
                return True
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(self._parents.get(cur, ()))
        return False

    def validate(self) -> None:
        for parent, children in self._children.items():
            if parent not in self._categories:
                raise OntologyError(f"edge from unknown category {parent!r}")
            for child in children:
                if child not in self._categories:
                    raise OntologyError(f"edge to unknown category {child!r}")
                if self._categories[child].depth != self._categories[parent].depth + 1:
                    raise OntologyError(
                        f"edge ({parent!r}, {child!r}) is not depth-increasing"
                    )
        root_set = set(self._roots)
        for name, cat in self._categories.items():
            if cat.depth == 0 and name not in root_set:
                raise OntologyError(f"depth-0 category {name!r} is not a root")
            if name in root_set and cat.depth != 0:
                raise OntologyError(f"root {name!r} has nonzero depth")
            if name not in root_set:
                parents = self._parents.get(name, ())
                if not parents:
                    raise OntologyError(f"category {name!r} unreachable from roots")
                best = min(self._categories[p].depth for p in parents) + 1
                if cat.depth != best:
                    raise OntologyError(
                        f"category {name!r} depth {cat.depth} != min parent depth + 1"
                    )

    def to_dict(self) -> dict:
        return {
            "categories": [
                {"name": c.name, "depth": c.depth}
                for c in sorted(self._categories.values(), key=lambda c: (c.depth, c.name))
            ],
            "edges": sorted(self.edges()),
            "roots": list(self._roots),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EntityOntology":
        onto = cls()
        declared = {c["name"]: c["depth"] for c in data["categories"]}
        for root in data["roots"]:
            onto.add_root(root)
        # Attach in depth order so every parent exists before its children.
        pending = sorted(data["edges"], key=lambda e: declared.get(e[1], 0))
        for parent, child in pending:
            onto.add_child(parent, child)
        for name, depth in declared.items():
            if name not in onto or onto.depth(name) != depth:
                raise OntologyError(f"declared depth mismatch for {name!r}")
        onto.validate()
        return onto


@dataclass(frozen=True)
class RelationPhrase:
    """An open-vocabulary verb phrase naming a relation."""

    text: str
    normalized: str = ""

    def __post_init__(self) -> None:
        norm = normalize(self.text)
        if not norm:
            raise ValueError("relation phrase must be nonempty")
        object.__setattr__(self, "normalized", norm)

    @classmethod
    def create(
        cls, text: str, stop_relations: Iterable[str] = DEFAULT_STOP_RELATIONS
    ) -> "RelationPhrase":
        phrase = cls(text)
        if phrase.normalized in set(stop_relations):
            raise ValueError(f"bare copula rejected as relation: {text!r}")
        return phrase


NONE_PHRASE = RelationPhrase(NONE_RELATION)

PROVENANCE_GENERATED = "generated"
PROVENANCE_ENRICHED = "enriched"


class RelationOntology:
    """Map from ordered category pairs to candidate relation phrases.

    Pairs that were queried but produced nothing are remembered explicitly
    so retrieval can fall through to parent pairs without re-querying.
    """

    def __init__(self) -> None:
        # pair -> {normalized phrase -> (phrase, provenance)}
        self._entries: dict[tuple[str, str], dict[str, tuple[RelationPhrase, str]]] = {}
        self._empty_pairs: set[tuple[str, str]] = set()

    def has_entry(self, pair: tuple[str, str]) -> bool:
        return pair in self._entries or pair in self._empty_pairs

    def pairs(self) -> tuple[tuple[str, str], ...]:
        return tuple(sorted(set(self._entries) | self._empty_pairs))

    def phrases(self, pair: tuple[str, str]) -> tuple[tuple[RelationPhrase, str], ...]:
        """Phrases with provenance for one pair, in insertion order."""
        return tuple(self._entries.get(pair, {}).values())

    def add(self, pair: tuple[str, str], phrase: RelationPhrase, provenance: str) -> bool:
        """Add a phrase; returns False if an equal phrase is already stored."""
        if phrase.normalized == NONE_RELATION:
            raise ValueError("the none sentinel cannot be stored as a relation")
        if provenance not in (PROVENANCE_GENERATED, PROVENANCE_ENRICHED):
            raise ValueError(f"unknown provenance: {provenance!r}")
        entry = self._entries.setdefault(pair, {})
        if phrase.normalized in entry:
            return False
        entry[phrase.normalized] = (phrase, provenance)
        self._empty_pairs.discard(pair)
        return True

    def mark_empty(self, pair: tuple[str, str]) -> None:
        if pair not in self._entries:
            self._empty_pairs.add(pair)

    def to_dict(self) -> dict:
        out: dict[str, list[dict]] = {}
        for pair in self.pairs():
            key = f"{pair[0]}||{pair[1]}"
            out[key] = [
                {"phrase": phrase.text, "provenance": prov}
                for phrase, prov in self.phrases(pair)
            ]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RelationOntology":
        ro = cls()
        for key, items in data.items():
            cat1, sep, cat2 = key.partition("||")
            if not sep:
                raise ValueError(f"bad relation ontology key: {key!r}")
            pair = (cat1, cat2)
            if not items:
                ro.mark_empty(pair)
            for item in items:
                ro.add(pair, RelationPhrase(item["phrase"]), item["provenance"])
        return ro


class MentionCase(str, Enum):
    PAGE_MATCH = "PAGE_MATCH"
    CONTEXT_TYPED = "CONTEXT_TYPED"
    RETRIEVED = "RETRIEVED"
    IRRELEVANT = "IRRELEVANT"


@dataclass(frozen=True)
class TypedMention:
    """A surface mention resolved to an entity name and ontology category."""

    surface: str
    doc_id: str
    span: tuple[int, int]
    entity_name: str
    category: str | None
    case: MentionCase
    self_coherence: float | None = None
    theme_coherence: float | None = None

    def __post_init__(self) -> None:
        if (self.category is None) != (self.case is MentionCase.IRRELEVANT):
            raise ValueError("category must be set exactly when the mention is relevant")
        for score in (self.self_coherence, self.theme_coherence):
            if score is not None and not -1.0 - 1e-9 <= score <= 1.0 + 1e-9:
                raise ValueError(f"coherence score out of range: {score}")


class TripleSource(str, Enum):
    ONTOLOGY_SELECTED = "ONTOLOGY_SELECTED"
    FALLBACK_EXTRACTED = "FALLBACK_EXTRACTED"


@dataclass(frozen=True)
class Triple:
    """One (head, relation, tail) fact with category and provenance tags."""

    head: str
    relation: RelationPhrase
    tail: str
    head_category: str
    tail_category: str
    provenance: tuple[tuple[str, tuple[int, int]], ...]
    source: TripleSource

    def __post_init__(self) -> None:
        if normalize(self.head) == normalize(self.tail):
            raise ValueError(f"reflexive triple rejected: {self.head!r}")
        if self.relation.normalized == NONE_RELATION:
            raise ValueError("triple with the none sentinel rejected")
        if not self.provenance:
            raise ValueError("triple needs at least one provenance record")

    @property
    def key(self) -> tuple[str, str, str]:
        return (normalize(self.head), self.relation.normalized, normalize(self.tail))

    def rendered(self) -> str:
        return f"{self.head} {self.relation.text} {self.tail}"


# FALLBACK triples that duplicate an ontology-selected triple collapse into
# the ontology-selected record regardless of insertion order.
_SOURCE_PRIORITY = {TripleSource.ONTOLOGY_SELECTED: 0, TripleSource.FALLBACK_EXTRACTED: 1}


class ThemeGraph:
    """Deduplicated set of triples plus the entities they mention.

    Triples are keyed by normalized (head, relation, tail); inserting a
    duplicate accumulates its provenance instead of adding a second triple.
    """

    def __init__(self) -> None:
        self._triples: dict[tuple[str, str, str], Triple] = {}
        self._entities: dict[str, set[str]] = {}
        self._alias_map: dict[str, str] = {}

    def __len__(self) -> int:
        return len(self._triples)

    @property
    def alias_map(self) -> dict[str, str]:
        return dict(self._alias_map)

    def entities(self) -> dict[str, frozenset[str]]:
        return {name: frozenset(cats) for name, cats in self._entities.items()}

    def triples(self) -> tuple[Triple, ...]:
        """Triples in canonical key order."""
        return tuple(self._triples[k] for k in sorted(self._triples))

    def resolve(self, name: str) -> str:
        seen = set()
        while name in self._alias_map and name not in seen:
            seen.add(name)
            name = self._alias_map[name]
        return name

    def add_triple(self, triple: Triple) -> bool:
        """Insert a triple; returns True only if it was newly added."""
        head = self.resolve(triple.head)
        tail = self.resolve(triple.tail)
        if (head, tail) != (triple.head, triple.tail):
            if normalize(head) == normalize(tail):
                raise GraphError(
                    f"aliases collapse {triple.head!r} and {triple.tail!r}"
                )
            triple = replace(triple, head=head, tail=tail)
        key = triple.key
        existing = self._triples.get(key)
        self._entities.setdefault(triple.head, set()).add(triple.head_category)
        self._entities.setdefault(triple.tail, set()).add(triple.tail_category)
        if existing is None:
            self._triples[key] = triple
            return True
        self._triples[key] = self._merge_records(existing, triple)
        return False

    @staticmethod
    def _merge_records(a: Triple, b: Triple) -> Triple:
        provenance = tuple(sorted(set(a.provenance) | set(b.provenance)))

        def rank(t: Triple):
            # Total order so the merged record is insertion-order-independent.
            return (
                _SOURCE_PRIORITY[t.source],
                t.head_category,
                t.tail_category,
                t.head,
                t.tail,
                t.relation.text,
            )

        keep = min((a, b), key=rank)
        return replace(keep, provenance=provenance)

    def set_alias(self, alias: str, canonical: str) -> None:
        """Register an alias edge without rewriting triples (import path)."""
        if canonical not in self._entities:
            raise GraphError(f"alias target {canonical!r} is not a graph entity")
        if alias == canonical:
            return
        self._alias_map[alias] = canonical

    def merge_aliases(self, a: str, b: str, canonical: str) -> "ThemeGraph":
        """Route both names to canonical and rewrite affected triples.

        Names already merged away are followed through the alias map, so a
        sequence of merges gives the same graph in any order.
        """
        for name in (a, b):
            if name not in self._entities and name not in self._alias_map:
                raise GraphError(f"unknown entity: {name!r}")
        if canonical not in (a, b):
            raise GraphError("canonical name must be one of the merged entities")
        a, b, canonical = self.resolve(a), self.resolve(b), self.resolve(canonical)
        merged = a if canonical == b else b
        if merged == canonical:
            return self
        cats = self._entities.pop(merged)
        self._entities.setdefault(canonical, set()).update(cats)
        for alias, target in list(self._alias_map.items()):
            if target == merged:
                self._alias_map[alias] = canonical
        self._alias_map[merged] = canonical
        for key in [k for k, t in self._triples.items() if merged in (t.head, t.tail)]:
            triple = self._triples.pop(key)
            triple = replace(
                triple,
                head=canonical if triple.head == merged else triple.head,
                tail=canonical if triple.tail == merged else triple.tail,
            )
            if normalize(triple.head) == normalize(triple.tail):
                raise GraphError(
                    f"merge would create reflexive triple for {canonical!r}"
                )
            existing = self._triples.get(triple.key)
            self._triples[triple.key] = (
                triple if existing is None else self._merge_records(existing, triple)
            )
        return self

    def validate(self) -> None:
        for key, triple in self._triples.items():
            if triple.key != key:
                raise GraphError(f"triple stored under wrong key: {key}")
            for name in (triple.head, triple.tail):
                if self.resolve(name) != name:
                    raise GraphError(f"triple references non-canonical name {name!r}")
                if name not in self._entities:
                    raise GraphError(f"triple references unregistered entity {name!r}")
        for alias, target in self._alias_map.items():
            if self.resolve(alias) not in self._entities:
                raise GraphError(f"alias {alias!r} does not resolve to an entity")
        keys = [t.key for t in self._triples.values()]
        if len(keys) != len(set(keys)):
            raise GraphError("duplicate triples after normalization")

    def signature(self) -> tuple:
        """Comparable content summary used by equality checks in tests."""
        return (
            tuple(sorted((n, tuple(sorted(c))) for n, c in self._entities.items())),
            tuple(
                (t.key, t.head_category, t.tail_category, t.source.value)
                for t in self.triples()
            ),
            tuple(sorted(self._alias_map.items())),
        )
