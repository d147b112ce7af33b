"""Mention mining: noun-chunk extraction and the three noise filters.

Rule 1 drops chunks that lack a noun, contain a pronoun, or whose head is a
stopword. Rule 2 drops chunks that are frequent in a general corpus yet
incoherent with the theme. Rule 3 strips frequent, weakly co-occurring
leading modifiers without ever touching the head noun.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .model import Document, Theme, normalize
from .providers import EmbeddingProvider, PosTagger
from .typer import theme_coherence

__all__ = [
    "MentionChunk",
    "FrequencyTable",
    "load_stopwords",
    "extract_chunks",
    "filter_mentions",
    "strip_modifiers",
    "build_cooccurrence",
    "mine_corpus",
]

log = logging.getLogger(__name__)

INFINITE_RANK = math.inf


def load_stopwords() -> frozenset[str]:
    """The fixed English stopword list shipped with the package."""
    text = resources.files("themekg.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


@dataclass(frozen=True)
class MentionChunk:
    """A candidate mention with POS annotations and document provenance."""

    doc_id: str
    span: tuple[int, int]
    text: str
    tags: tuple[tuple[str, str], ...]
    sentence_index: int

    @property
    def head(self) -> str | None:
        """Rightmost noun token, lowercased."""
        for token, tag in reversed(self.tags):
            if tag == "NOUN":
                return token.casefold()
        return None


class FrequencyTable:
    """General-corpus frequency ranks plus per-theme co-occurrence counts.

    Ranks come from a (token, count) TSV, rank 1 being the most frequent;
    unknown tokens rank as infinity, i.e. they are treated as rare. The
    frequency rank of a multi-word phrase is the phrase's own rank when
    listed, otherwise the rank of its head token.
    """

    def __init__(self, counts: dict[str, int] | None = None):
        ordered = sorted((counts or {}).items(), key=lambda kv: (-kv[1], kv[0]))
        self._ranks = {normalize(tok): i + 1 for i, (tok, _) in enumerate(ordered)}
        # token -> distinct retained-mention head tokens seen nearby
        self._cooccurrence: dict[str, set[str]] = {}

    @classmethod
    def from_tsv(cls, path: str | Path) -> "FrequencyTable":
        counts: dict[str, int] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                token, count = line.split("\t")
                counts[token] = int(count)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad frequency row {line!r}") from exc
        return cls(counts)

    def rank(self, token_or_phrase: str) -> float:
        return self._ranks.get(normalize(token_or_phrase), INFINITE_RANK)

    def chunk_rank(self, chunk: MentionChunk) -> float:
        phrase_rank = self.rank(chunk.text)
        if not math.isinf(phrase_rank):
            return phrase_rank
        head = chunk.head
        return self.rank(head) if head else INFINITE_RANK

    def record_cooccurrence(self, token: str, head: str) -> None:
        self._cooccurrence.setdefault(normalize(token), set()).add(normalize(head))

    def cooccurrence(self, token: str) -> int:
        return len(self._cooccurrence.get(normalize(token), ()))


def _tags_with_spans(
    tagger: PosTagger, sentence: str
) -> list[tuple[str, str, int, int]]:
    """Re-locate each tagged token in the sentence (tokens come in order)."""
    located = []
    cursor = 0
    for token, tag in tagger.tag(sentence):
        start = sentence.find(token, cursor)
        if start < 0:
            continue
        cursor = start + len(token)
        located.append((token, tag, start, cursor))
    return located


def extract_chunks(doc: Document, tagger: PosTagger) -> list[MentionChunk]:
    """All noun chunks of a document, in order, with absolute spans."""
    chunks: list[MentionChunk] = []
    for index, (start, end) in enumerate(doc.sentences):
        sentence = doc.text[start:end]
        tagged = _tags_with_spans(tagger, sentence)
        for c_start, c_end in tagger.noun_chunks(sentence):
            if not 0 <= c_start < c_end <= len(sentence):
                raise ValueError(
                    f"{doc.doc_id}: chunk span ({c_start}, {c_end}) outside sentence"
                )
            chunk_tags = tuple(
                (tok, tag)
                for tok, tag, t_start, t_end in tagged
                if t_start >= c_start and t_end <= c_end
            )
            chunks.append(
                MentionChunk(
                    doc_id=doc.doc_id,
                    span=(start + c_start, start + c_end),
                    text=sentence[c_start:c_end],
                    tags=chunk_tags,
                    sentence_index=index,
                )
            )
    return chunks


def filter_mentions(
    chunks: list[MentionChunk],
    freq: FrequencyTable,
    theme: Theme,
    *,
    embedder: EmbeddingProvider,
    stopwords: frozenset[str] | None = None,
    high_freq_rank: int = 5000,
    coherence_cutoff: float = 0.30,
) -> list[MentionChunk]:
    """Apply rules 1 and 2; survivors keep their spans."""
    stopwords = stopwords if stopwords is not None else load_stopwords()
    survivors: list[MentionChunk] = []
    for chunk in chunks:
        head = chunk.head
        if head is None:
            continue
        if any(tag == "PRON" for _, tag in chunk.tags):
            continue
        if head in stopwords:
            continue
        if freq.chunk_rank(chunk) <= high_freq_rank:
            coherence = theme_coherence(chunk.text, theme, embedder)
            if coherence < coherence_cutoff:
                log.debug("noisy mention dropped: %r (coherence %.3f)", chunk.text, coherence)
                continue
        survivors.append(chunk)
    return survivors


def strip_modifiers(
    mention: MentionChunk,
    freq: FrequencyTable,
    *,
    high_freq_rank: int = 5000,
    min_cooccurrence: int = 3,
) -> MentionChunk:
    """Remove leading non-noun modifiers that are frequent in general text
    but rarely co-occur with the theme's mention heads. Idempotent; the
    head noun is never removed."""
    tags = list(mention.tags)
    dropped = 0
    for token, tag in tags:
        if tag == "NOUN":
            break
        if freq.rank(token) > high_freq_rank:
            break
        if freq.cooccurrence(token) >= min_cooccurrence:
            break
        dropped += 1
    if dropped == 0:
        return mention
    removed = [tok for tok, _ in tags[:dropped]]
    offset = 0
    text = mention.text
    for token in removed:
        offset = text.index(token, offset) + len(token)
    while offset < len(text) and text[offset].isspace():
        offset += 1
    log.debug("modifiers stripped from %r: %s", mention.text, removed)
    return replace(
        mention,
        span=(mention.span[0] + offset, mention.span[1]),
        text=text[offset:],
        tags=tuple(tags[dropped:]),
    )


def build_cooccurrence(
    docs: list[Document],
    mentions_by_doc: dict[str, list[MentionChunk]],
    tagger: PosTagger,
    freq: FrequencyTable,
    *,
    window: int = 1,
) -> None:
    """Pre-pass over the corpus: for every token, record which retained
    mention heads occur within `window` sentences of it."""
    for doc in docs:
        heads_by_sentence: dict[int, set[str]] = {}
        for mention in mentions_by_doc.get(doc.doc_id, []):
            head = mention.head
            if head:
                heads_by_sentence.setdefault(mention.sentence_index, set()).add(head)
        if not heads_by_sentence:
            continue
        for index, (start, end) in enumerate(doc.sentences):
            nearby: set[str] = set()
            for offset in range(-window, window + 1):
                nearby |= heads_by_sentence.get(index + offset, set())
            if not nearby:
                continue
            for token, _ in tagger.tag(doc.text[start:end]):
                for head in nearby:
                    freq.record_cooccurrence(token, head)


def mine_corpus(
    docs: list[Document],
    tagger: PosTagger,
    freq: FrequencyTable,
    theme: Theme,
    *,
    embedder: EmbeddingProvider,
    stopwords: frozenset[str] | None = None,
    high_freq_rank: int = 5000,
    coherence_cutoff: float = 0.30,
    min_cooccurrence: int = 3,
    cooccurrence_window: int = 1,
) -> dict[str, list[MentionChunk]]:
    """Full mining pass: chunk, filter, co-occurrence pre-pass, strip."""
    retained: dict[str, list[MentionChunk]] = {}
    for doc in docs:
        chunks = extract_chunks(doc, tagger)
        retained[doc.doc_id] = filter_mentions(
            chunks,
            freq,
            theme,
            embedder=embedder,
            stopwords=stopwords,
            high_freq_rank=high_freq_rank,
            coherence_cutoff=coherence_cutoff,
        )
    build_cooccurrence(docs, retained, tagger, freq, window=cooccurrence_window)
    return {
        doc_id: [
            strip_modifiers(
                mention,
                freq,
                high_freq_rank=high_freq_rank,
                min_cooccurrence=min_cooccurrence,
            )
            for mention in mentions
        ]
        for doc_id, mentions in retained.items()
    }
