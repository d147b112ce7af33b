"""Deterministic offline providers.

All of these are pure functions of their inputs plus checked-in fixture
data, so every test and the ``--mock-providers`` pipeline mode are fully
hermetic. The context-typing and retriever mocks use token overlap; they
are stand-ins for the real scorers, not claims of fidelity.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from pathlib import Path

import numpy as np

from ..model import normalize
from . import (
    CandidateCategoryRetriever,
    ContextTypingProvider,
    EmbeddingProvider,
    LlmProvider,
    PosTagger,
    ProviderError,
    UnknownCategoryError,
    WikiCategoryProvider,
)

__all__ = [
    "mock_tokens",
    "HashEmbedding",
    "ScriptedLlm",
    "ScriptedLlmError",
    "MockWiki",
    "RuleTagger",
    "OverlapContextTyping",
    "EmbeddingRetriever",
]

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")
_FINGERPRINT = re.compile(r"^[0-9a-f]{64}$")


def _singularize(token: str) -> str:
    if len(token) > 3 and token.endswith("ies"):
        return token[:-3] + "y"
    if len(token) > 3 and token.endswith("s") and not token.endswith("ss"):
        return token[:-1]
    return token


def mock_tokens(text: str) -> list[str]:
    """Casefolded alphanumeric tokens with trivial plural folding."""
    return [_singularize(t) for t in _TOKEN_SPLIT.split(text.casefold()) if t]


class HashEmbedding(EmbeddingProvider):
    """Embedding as a pure function of the token multiset.

    Each token hashes to a fixed pseudo-random direction (SHA-256 expanded
    into components in [-1, 1)); the text vector is the L2-normalized sum
    over its tokens. Identical strings always embed identically.
    """

    SALT = b"mock-embed-v1:"

    def __init__(self, dim: int = 64):
        self.dim = dim
        self._directions: dict[str, np.ndarray] = {}
        self._memo: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def _direction(self, token: str) -> np.ndarray:
        cached = self._directions.get(token)
        if cached is not None:
            return cached
        seed = hashlib.sha256(self.SALT + token.encode("utf-8")).digest()
        values: list[float] = []
        counter = 0
        while len(values) < self.dim:
            block = hashlib.sha256(seed + counter.to_bytes(4, "big")).digest()
            for i in range(0, 32, 8):
                if len(values) >= self.dim:
                    break
                u = int.from_bytes(block[i : i + 8], "big")
                values.append(u / 2**63 - 1.0)
            counter += 1
        direction = np.array(values, dtype=np.float64)
        with self._lock:
            self._directions[token] = direction
        return direction

    def embed(self, text: str) -> np.ndarray:
        with self._lock:
            memo = self._memo.get(text)
        if memo is not None:
            return memo
        tokens = mock_tokens(text)
        if not tokens:
            raise ProviderError("embedding", f"no tokens in text: {text!r}")
        vector = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            vector += self._direction(token)
        vector /= np.linalg.norm(vector)
        vector.setflags(write=False)
        with self._lock:
            self._memo[text] = vector
        return vector


class ScriptedLlmError(ProviderError):
    """The scripted mock has no canned response for a prompt."""


class ScriptedLlm(LlmProvider):
    """Closed-world LLM mock: a script maps prompts to canned responses.

    Script keys are either the full prompt text or its SHA-256 hex
    fingerprint. An unknown prompt raises rather than fabricating output.
    """

    def __init__(self, script: dict[str, str]):
        self._by_prompt: dict[str, str] = {}
        self._by_fingerprint: dict[str, str] = {}
        for key, response in script.items():
            if _FINGERPRINT.match(key):
                self._by_fingerprint[key] = response
            else:
                self._by_prompt[key] = response

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedLlm":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    @staticmethod
    def fingerprint(prompt: str) -> str:
        return hashlib.sha256(prompt.encode("utf-8")).hexdigest()

    def complete(self, prompt: str) -> str:
        if prompt in self._by_prompt:
            return self._by_prompt[prompt]
        fp = self.fingerprint(prompt)
        if fp in self._by_fingerprint:
            return self._by_fingerprint[fp]
        raise ScriptedLlmError("llm", f"unscripted prompt (fingerprint {fp}): {prompt[:120]!r}")


class MockWiki(WikiCategoryProvider):
    """Category tree and pages loaded from a fixture mapping.

    Fixture shape: ``{"categories": {name: [child, ...]}, "pages":
    {title: [category, ...]}, "universe": [extra category names]}``.
    Known categories are the mapping keys plus every listed child; unknown
    categories raise, known leaves return an empty child list.
    """

    def __init__(self, categories: dict[str, list[str]], pages: dict[str, list[str]],
                 universe: list[str] | None = None):
        self._children = {name: list(children) for name, children in categories.items()}
        self._known = set(self._children)
        for children in self._children.values():
            self._known.update(children)
        self._pages = dict(pages)
        self._titles_by_norm = {normalize(title): title for title in pages}
        self._universe = sorted(
            self._known
            | {cat for cats in pages.values() for cat in cats}
            | set(universe or ())
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "MockWiki":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data["categories"], data["pages"], data.get("universe"))

    @property
    def universe(self) -> list[str]:
        """Every category name this fixture knows about."""
        return list(self._universe)

    def children(self, category: str) -> list[str]:
        if category not in self._known:
            raise UnknownCategoryError("wiki", f"unknown category: {category!r}")
        return [c for c in self._children.get(category, []) if c != category]

    def page_title(self, title: str) -> str | None:
        return self._titles_by_norm.get(normalize(title))

    def page_categories(self, title: str) -> list[str]:
        canonical = self.page_title(title)
        if canonical is None:
            raise ProviderError("wiki", f"no page: {title!r}")
        return list(self._pages[canonical])


# Minimal closed-class lexicon; open-class words default to NOUN with a few
# suffix heuristics. Good enough for fixture corpora, not for real text.
_BASE_LEXICON = {
    "a": "DET", "an": "DET", "the": "DET", "this": "DET", "that": "DET",
    "these": "DET", "those": "DET", "every": "DET", "some": "DET", "no": "DET",
    "each": "DET", "any": "DET",
    "i": "PRON", "you": "PRON", "he": "PRON", "she": "PRON", "it": "PRON",
    "we": "PRON", "they": "PRON", "them": "PRON", "him": "PRON", "her": "PRON",
    "itself": "PRON", "himself": "PRON", "herself": "PRON", "themselves": "PRON",
    "its": "PRON", "their": "PRON", "who": "PRON", "which": "PRON",
    "in": "ADP", "on": "ADP", "at": "ADP", "of": "ADP", "for": "ADP",
    "with": "ADP", "from": "ADP", "by": "ADP", "to": "ADP", "into": "ADP",
    "like": "ADP", "as": "ADP", "over": "ADP", "under": "ADP", "between": "ADP",
    "and": "CCONJ", "or": "CCONJ", "but": "CCONJ",
    "is": "AUX", "are": "AUX", "was": "AUX", "were": "AUX", "be": "AUX",
    "been": "AUX", "being": "AUX", "am": "AUX", "do": "AUX", "does": "AUX",
    "did": "AUX", "have": "AUX", "had": "AUX", "can": "AUX",
    "could": "AUX", "will": "AUX", "would": "AUX", "should": "AUX",
    "may": "AUX", "might": "AUX", "must": "AUX",
    "not": "PART", "up": "PART",
    "most": "ADJ", "common": "ADJ", "actual": "ADJ", "deep": "ADJ",
    "continuous": "ADJ", "electric": "ADJ", "electrical": "ADJ",
    "rechargeable": "ADJ", "recreational": "ADJ", "auxiliary": "ADJ",
    "spent": "ADJ", "new": "ADJ", "old": "ADJ", "high": "ADJ", "low": "ADJ",
    "main": "ADJ", "modern": "ADJ", "flooded": "ADJ", "many": "ADJ",
    "run": "VERB", "runs": "VERB", "ran": "VERB", "store": "VERB",
    "stores": "VERB", "provide": "VERB", "provides": "VERB", "use": "VERB",
    "uses": "VERB", "make": "VERB", "makes": "VERB", "pile": "VERB",
    "piles": "VERB", "rival": "VERB", "rivals": "VERB", "depend": "VERB",
    "depends": "VERB", "include": "VERB", "includes": "VERB", "go": "VERB",
    "goes": "VERB", "get": "VERB", "gets": "VERB",
    "very": "ADV", "also": "ADV", "often": "ADV", "too": "ADV",
    "recycling": "NOUN", "charging": "NOUN", "lead": "NOUN",
}

_TOKEN_RE = re.compile(r"[A-Za-z0-9]+(?:['-][A-Za-z0-9]+)*")


class RuleTagger(PosTagger):
    """Lexicon-plus-suffix POS tagger with contiguous ADJ/NOUN chunking.

    Noun chunks are maximal runs of ADJ/NOUN tokens containing at least one
    NOUN; determiners are never part of a chunk.
    """

    def __init__(self, extra_lexicon: dict[str, str] | None = None):
        self._lexicon = dict(_BASE_LEXICON)
        if extra_lexicon:
            self._lexicon.update(
                {word.casefold(): tag for word, tag in extra_lexicon.items()}
            )

    def _tag_token(self, token: str) -> str:
        word = token.casefold()
        if word in self._lexicon:
            return self._lexicon[word]
        if word.endswith("ly"):
            return "ADV"
        if word.endswith("ed") or word.endswith("ing"):
            return "VERB"
        return "NOUN"

    def _tokens(self, sentence: str) -> list[tuple[str, int, int]]:
        return [(m.group(0), m.start(), m.end()) for m in _TOKEN_RE.finditer(sentence)]

    def tag(self, sentence: str) -> list[tuple[str, str]]:
        return [(tok, self._tag_token(tok)) for tok, _, _ in self._tokens(sentence)]

    def noun_chunks(self, sentence: str) -> list[tuple[int, int]]:
        tokens = self._tokens(sentence)
        chunks: list[tuple[int, int]] = []
        run: list[tuple[str, int, int]] = []

        def flush() -> None:
            if run and any(self._tag_token(t) == "NOUN" for t, _, _ in run):
                chunks.append((run[0][1], run[-1][2]))
            run.clear()

        for token, start, end in tokens:
            if run and sentence[run[-1][2] : start].strip():
                flush()  # punctuation between tokens breaks the run
            if self._tag_token(token) in ("ADJ", "NOUN"):
                run.append((token, start, end))
            else:
                flush()
        flush()
        return chunks


class OverlapContextTyping(ContextTypingProvider):
    """Token-overlap consistency: the share of category-name tokens that
    also occur in the entity or its context. Deterministic stand-in for a
    learned scorer; range [0, 1]."""

    def consistency(self, entity: str, context: str, category: str) -> float:
        cat_tokens = set(mock_tokens(category))
        if not cat_tokens:
            return 0.0
        observed = set(mock_tokens(entity)) | set(mock_tokens(context))
        return len(cat_tokens & observed) / len(cat_tokens)


class EmbeddingRetriever(CandidateCategoryRetriever):
    """Ranks a fixed category universe by embedding similarity to the
    mention plus its context; categories below the floor are not relevant
    enough to return."""

    def __init__(self, universe: list[str], embedder: EmbeddingProvider, floor: float = 0.2):
        self._universe = list(dict.fromkeys(universe))
        self._embedder = embedder
        self._floor = floor

    def retrieve(self, mention: str, context: str, k: int) -> list[str]:
        query = self._embedder.embed(f"{mention} {context}")
        scored = []
        for category in self._universe:
            vector = self._embedder.embed(category)
            score = float(np.dot(query, vector))
            if score > self._floor:
                scored.append((-score, category))
        scored.sort()
        return [category for _, category in scored[:k]]
