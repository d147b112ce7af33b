"""Production providers speaking HTTP APIs.

The wiki provider talks to a MediaWiki instance (categorymembers, page
categories, search) with continuation-based pagination. The LLM provider
posts to a chat-completion-style JSON endpoint, the embedding provider to
a JSON embedding endpoint; both take their API keys from environment
variables, never from config files.

Every call runs through bounded retries with exponential backoff; a call
that still fails surfaces as a ProviderError naming the provider.
"""

from __future__ import annotations

import logging
import os
import time

import numpy as np
import requests

from ..model import normalize
from . import (
    CandidateCategoryRetriever,
    ContextTypingProvider,
    EmbeddingProvider,
    LlmProvider,
    PosTagger,
    ProviderBundle,
    ProviderError,
    UnknownCategoryError,
    WikiCategoryProvider,
)

__all__ = [
    "HttpClient",
    "MediaWikiProvider",
    "ChatCompletionLlm",
    "JsonEmbeddingProvider",
    "EmbeddingContextTyping",
    "WikiSearchRetriever",
    "SpacyTagger",
    "build_http_bundle",
]

log = logging.getLogger(__name__)

LLM_API_KEY_VAR = "THEMEKG_LLM_API_KEY"
EMBEDDING_API_KEY_VAR = "THEMEKG_EMBEDDING_API_KEY"

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class HttpClient:
    """Shared request machinery: timeouts, bounded retries, backoff."""

    def __init__(self, provider: str, *, timeout: float = 30.0, retries: int = 3,
                 backoff: float = 1.0, session: requests.Session | None = None,
                 sleep=time.sleep):
        self.provider = provider
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.session = session or requests.Session()
        self._sleep = sleep

    def request(self, method: str, url: str, **kwargs) -> requests.Response:
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                response = self.session.request(
                    method, url, timeout=self.timeout, **kwargs
                )
            except requests.RequestException as exc:
                last_error = exc
                log.warning("%s: attempt %d failed: %s", self.provider, attempt + 1, exc)
                continue
            if response.status_code in _RETRYABLE_STATUS:
                last_error = ProviderError(
                    self.provider, f"HTTP {response.status_code} from {url}"
                )
                log.warning("%s: attempt %d got HTTP %d",
                            self.provider, attempt + 1, response.status_code)
                continue
            if response.status_code != 200:
                raise ProviderError(
                    self.provider, f"HTTP {response.status_code} from {url}"
                )
            return response
        raise ProviderError(
            self.provider, f"gave up after {self.retries + 1} attempts: {last_error}"
        )

    def get_json(self, url: str, **kwargs) -> dict:
        return self.request("GET", url, **kwargs).json()

    def post_json(self, url: str, **kwargs) -> dict:
        return self.request("POST", url, **kwargs).json()


class MediaWikiProvider(WikiCategoryProvider):
    """Category tree and page lookups over the public MediaWiki API."""

    def __init__(self, api_url: str, client: HttpClient | None = None,
                 *, min_interval: float = 0.0, sleep=time.sleep):
        self.api_url = api_url
        self.client = client or HttpClient("wiki")
        self._min_interval = min_interval
        self._last_call = 0.0
        self._sleep = sleep

    def _query(self, params: dict) -> dict:
        if self._min_interval:
            wait = self._last_call + self._min_interval - time.monotonic()
            if wait > 0:
                self._sleep(wait)
        self._last_call = time.monotonic()
        merged = {"action": "query", "format": "json", **params}
        data = self.client.get_json(self.api_url, params=merged)
        if "error" in data:
            raise ProviderError("wiki", str(data["error"]))
        return data

    @staticmethod
    def _strip_ns(title: str) -> str:
        return title.split(":", 1)[1] if ":" in title else title

    def children(self, category: str) -> list[str]:
        members: list[str] = []
        params = {
            "list": "categorymembers",
            "cmtitle": f"Category:{category}",
            "cmtype": "subcat",
            "cmlimit": "500",
        }
        while True:
            data = self._query(params)
            batch = data.get("query", {}).get("categorymembers")
            if batch is None:
                raise UnknownCategoryError("wiki", f"unknown category: {category!r}")
            members.extend(self._strip_ns(m["title"]) for m in batch)
            cont = data.get("continue")
            if not cont:
                break
            params = {**params, **cont}
        return [m for m in members if normalize(m) != normalize(category)]

    def page_title(self, title: str) -> str | None:
        data = self._query({"titles": title, "redirects": "1"})
        pages = data.get("query", {}).get("pages", {})
        for page_id, page in pages.items():
            if page_id != "-1" and "missing" not in page:
                return page["title"]
        return None

    def page_categories(self, title: str) -> list[str]:
        categories: list[str] = []
        params = {
            "titles": title,
            "prop": "categories",
            "clshow": "!hidden",
            "cllimit": "500",
            "redirects": "1",
        }
        while True:
            data = self._query(params)
            pages = data.get("query", {}).get("pages", {})
            for page in pages.values():
                for cat in page.get("categories", []):
                    categories.append(self._strip_ns(cat["title"]))
            cont = data.get("continue")
            if not cont:
                break
            params = {**params, **cont}
        return categories

    def search_categories(self, text: str, k: int) -> list[str]:
        data = self._query({
            "list": "search",
            "srsearch": text,
            "srnamespace": "14",  # category namespace
            "srlimit": str(k),
        })
        hits = data.get("query", {}).get("search", [])
        out: list[str] = []
        for hit in hits:
            name = self._strip_ns(hit["title"])
            if name not in out:
                out.append(name)
        return out


class ChatCompletionLlm(LlmProvider):
    """Chat-completion JSON API; decoding pinned to temperature 0."""

    def __init__(self, api_url: str, model: str, client: HttpClient | None = None,
                 api_key: str | None = None):
        if not api_url:
            raise ProviderError("llm", "no API endpoint configured")
        self.api_url = api_url
        self.model = model
        self.client = client or HttpClient("llm")
        self.api_key = api_key if api_key is not None else os.environ.get(LLM_API_KEY_VAR, "")

    def complete(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        data = self.client.post_json(
            self.api_url,
            headers=headers,
            json={
                "model": self.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": 0,
            },
        )
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError("llm", f"malformed completion response: {exc}") from exc


class JsonEmbeddingProvider(EmbeddingProvider):
    """JSON embedding API; vectors are re-normalized to unit length."""

    def __init__(self, api_url: str, model: str, client: HttpClient | None = None,
                 api_key: str | None = None):
        if not api_url:
            raise ProviderError("embedding", "no API endpoint configured")
        self.api_url = api_url
        self.model = model
        self.client = client or HttpClient("embedding")
        self.api_key = (
            api_key if api_key is not None else os.environ.get(EMBEDDING_API_KEY_VAR, "")
        )
        self._memo: dict[str, np.ndarray] = {}

    def embed(self, text: str) -> np.ndarray:
        if text in self._memo:
            return self._memo[text]
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        data = self.client.post_json(
            self.api_url, headers=headers, json={"model": self.model, "input": text}
        )
        try:
            values = data["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError("embedding", f"malformed embedding response: {exc}") from exc
        vector = np.asarray(values, dtype=np.float64)
        norm = float(np.linalg.norm(vector))
        if norm == 0.0:
            raise ProviderError("embedding", "zero vector returned")
        vector /= norm
        vector.setflags(write=False)
        self._memo[text] = vector
        return vector


class EmbeddingContextTyping(ContextTypingProvider):
    """Context consistency from embedding similarity, mapped to [0, 1].

    A stand-in scorer: the real zero-shot typing model sits behind the same
    interface, and anything producing a deterministic [0, 1] score works.
    """

    def __init__(self, embedder: EmbeddingProvider):
        self._embedder = embedder

    def consistency(self, entity: str, context: str, category: str) -> float:
        a = self._embedder.embed(f"{entity}. {context}")
        b = self._embedder.embed(category)
        return (float(np.dot(a, b)) + 1.0) / 2.0


class WikiSearchRetriever(CandidateCategoryRetriever):
    """Candidate categories from MediaWiki full-text search."""

    def __init__(self, wiki: MediaWikiProvider):
        self._wiki = wiki

    def retrieve(self, mention: str, context: str, k: int) -> list[str]:
        return self._wiki.search_categories(f"{mention} {context}", k)


class SpacyTagger(PosTagger):
    """POS tagging and noun chunks backed by spaCy, when installed."""

    def __init__(self, model: str = "en_core_web_sm"):
        try:
            import spacy
        except ImportError as exc:
            raise ProviderError(
                "tagger",
                "spaCy is not installed; install spacy and an English model, "
                "or run with --mock-providers",
            ) from exc
        self._nlp = spacy.load(model)

    def tag(self, sentence: str) -> list[tuple[str, str]]:
        return [(token.text, token.pos_) for token in self._nlp(sentence)]

    def noun_chunks(self, sentence: str) -> list[tuple[int, int]]:
        doc = self._nlp(sentence)
        return [(chunk.start_char, chunk.end_char) for chunk in doc.noun_chunks]


def build_http_bundle(cfg) -> ProviderBundle:
    """Wire the production bundle from an HttpProviderConfig."""
    make_client = lambda name: HttpClient(
        name, timeout=cfg.timeout, retries=cfg.retries, backoff=cfg.backoff
    )
    wiki = MediaWikiProvider(cfg.wiki_api_url, make_client("wiki"))
    embedder = JsonEmbeddingProvider(
        cfg.embedding_api_url, cfg.embedding_model, make_client("embedding")
    )
    return ProviderBundle(
        embedding=embedder,
        llm=ChatCompletionLlm(cfg.llm_api_url, cfg.llm_model, make_client("llm")),
        wiki=wiki,
        tagger=SpacyTagger(),
        typing=EmbeddingContextTyping(embedder),
        retriever=WikiSearchRetriever(wiki),
    )
