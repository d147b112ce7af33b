"""themekg: build a fine-grained, theme-specific knowledge graph from a raw
corpus, guided by a wiki-derived category ontology and LLM-generated
relation candidates."""

from .model import (
    Document,
    EntityOntology,
    RelationOntology,
    RelationPhrase,
    Theme,
    ThemeGraph,
    Triple,
    TypedMention,
)

__all__ = [
    "Theme",
    "Document",
    "EntityOntology",
    "RelationOntology",
    "RelationPhrase",
    "TypedMention",
    "Triple",
    "ThemeGraph",
]

__version__ = "0.1.0"
