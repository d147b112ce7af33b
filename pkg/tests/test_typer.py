from __future__ import annotations

import random

import numpy as np
import pytest

from themekg.model import EntityOntology, MentionCase, Theme
from themekg.ontology import build_entity_ontology
from themekg.providers import EmbeddingProvider
from themekg.providers.mocks import (
    EmbeddingRetriever,
    HashEmbedding,
    OverlapContextTyping,
)
from themekg.typer import (
    NO_PAGE,
    TypingConfig,
    mention_context,
    self_coherence,
    theme_coherence,
    type_by_context,
    type_by_page,
    type_mention,
)
from themekg.model import Document

# Self-coherence values pinned from the standalone reference embedding.
SC_LEAD_ACID = 0.8833104577466696
SC_CHARGERS = 0.4834574504452255


@pytest.fixture()
def ontology(theme, small_wiki, embedder) -> EntityOntology:
    return build_entity_ontology(theme, small_wiki, embedder, edge_threshold=0.35)


class TestCoherenceScores:
    def test_identity_is_one(self, embedder):
        assert self_coherence("forklift", "forklift", embedder) == pytest.approx(1.0, abs=1e-6)

    def test_symmetry_exact(self, embedder):
        ab = self_coherence("lead-acid batteries", "flooded lead-acid battery", embedder)
        ba = self_coherence("flooded lead-acid battery", "lead-acid batteries", embedder)
        assert ab == ba

    def test_pinned_ordering(self, embedder):
        close = self_coherence("lead-acid batteries", "flooded lead-acid battery", embedder)
        far = self_coherence("battery chargers", "flooded lead-acid battery", embedder)
        assert close == pytest.approx(SC_LEAD_ACID, abs=1e-9)
        assert far == pytest.approx(SC_CHARGERS, abs=1e-9)
        assert close > far

    def test_theme_coherence_of_description_is_one(self, theme, embedder):
        assert theme_coherence(theme.description, theme, embedder) == pytest.approx(
            1.0, abs=1e-6
        )

    def test_unrelated_text_below_threshold(self, theme, embedder):
        assert theme_coherence("the features", theme, embedder) < 0.25

    def test_range(self, theme, embedder):
        for text in ["golf carts", "battery chargers", "warehouse equipment"]:
            assert -1.0 <= theme_coherence(text, theme, embedder) <= 1.0

    def test_empty_text_raises(self, theme, embedder):
        with pytest.raises(ValueError):
            theme_coherence("  ", theme, embedder)


class ScaledEmbedding(EmbeddingProvider):
    """Positively scaled copy of another embedder; cosine users must be
    invariant to this."""

    def __init__(self, inner: EmbeddingProvider, factor: float):
        assert factor > 0
        self._inner = inner
        self._factor = factor

    def embed(self, text: str) -> np.ndarray:
        return self._inner.embed(text) * self._factor


class TestTypeByPage:
    def test_forklift_maps_to_electric_vehicles(self, theme, small_wiki, embedder):
        typed = type_by_page("forklift", "d", (0, 8), theme,
                             wiki=small_wiki, embedder=embedder)
        # Oracle: recompute the filtered products independently.
        config = TypingConfig()
        surviving = {}
        for cat in small_wiki.page_categories("Forklift"):
            c_theme = theme_coherence(cat, theme, embedder)
            if c_theme >= config.theme_threshold:
                surviving[cat] = self_coherence(cat, "Forklift", embedder) * c_theme
        expected = max(sorted(surviving), key=lambda c: surviving[c])
        assert typed.category == expected == "Electric vehicles"
        assert typed.entity_name == "Forklift"
        assert typed.case is MentionCase.PAGE_MATCH

    def test_no_page_sentinel(self, theme, small_wiki, embedder):
        result = type_by_page("unheard of thing", "d", (0, 5), theme,
                              wiki=small_wiki, embedder=embedder)
        assert result is NO_PAGE

    def test_all_categories_below_threshold_is_irrelevant(self, theme, embedder):
        from themekg.providers.mocks import MockWiki

        wiki = MockWiki(
            categories={}, pages={"Warehouse trolley": ["Warehouse equipment", "Golf"]}
        )
        typed = type_by_page("warehouse trolley", "d", (0, 5), theme,
                             wiki=wiki, embedder=embedder)
        assert typed.case is MentionCase.IRRELEVANT
        assert typed.category is None

    def test_golf_carts_typed_under_electric_vehicles(self, theme, small_wiki, embedder):
        typed = type_by_page("golf carts", "d", (0, 10), theme,
                             wiki=small_wiki, embedder=embedder)
        assert typed.category == "Electric vehicles"


class CountingRetriever(EmbeddingRetriever):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.calls = 0

    def retrieve(self, mention, context, k):
        self.calls += 1
        return super().retrieve(mention, context, k)


class TestTypeByContext:
    def test_ontology_consistency_short_circuits_retriever(
        self, theme, ontology, embedder, small_wiki
    ):
        retriever = CountingRetriever(small_wiki.universe, embedder)
        typed = type_by_context(
            "continuous electricity", "d", (0, 5),
            "Deep cycle batteries provide continuous electricity.",
            ontology, theme,
            typing_provider=OverlapContextTyping(), retriever=retriever,
            embedder=embedder,
        )
        assert typed.case is MentionCase.CONTEXT_TYPED
        assert typed.category == "Battery (Electricity)"
        assert retriever.calls == 0

    def test_new_entity_typed_via_retriever(self, embedder, small_wiki):
        theme = Theme(
            name="Hamas attack on Israel",
            description=(
                "The October 2023 attack on Israel: assault on communities and a "
                "music festival, hostages, and international responses."
            ),
            root_categories=("Israel",),
        )
        onto = EntityOntology()
        onto.add_root("Israel")
        typed = type_by_context(
            "Nova music festival", "d", (0, 5),
            "Militants attacked the Nova music festival near the border.",
            onto, theme,
            typing_provider=OverlapContextTyping(),
            retriever=EmbeddingRetriever(small_wiki.universe, embedder),
            embedder=embedder,
        )
        assert typed.case is MentionCase.RETRIEVED
        assert typed.category == "Music festivals"

    def test_retrieved_all_below_theme_threshold_is_irrelevant(
        self, theme, ontology, embedder
    ):
        retriever = EmbeddingRetriever(["Golf"], embedder, floor=-1.0)
        typed = type_by_context(
            "mystery gadget", "d", (0, 5), "A mystery gadget sentence.",
            ontology, theme,
            typing_provider=OverlapContextTyping(), retriever=retriever,
            embedder=embedder,
        )
        assert typed.case is MentionCase.IRRELEVANT


class FailingTyping(OverlapContextTyping):
    def consistency(self, entity, context, category):
        raise AssertionError("Case 2 must not run for page-matched mentions")


class TestTypeMention:
    def kwargs(self, small_wiki, embedder, **extra):
        base = dict(
            wiki=small_wiki,
            embedder=embedder,
            typing_provider=OverlapContextTyping(),
            retriever=EmbeddingRetriever(small_wiki.universe, embedder),
        )
        base.update(extra)
        return base

    def test_page_match_never_reaches_case_two(self, theme, ontology, small_wiki, embedder):
        typed = type_mention(
            "golf carts", "d", (0, 10), "Golf carts run on batteries.",
            ontology, theme,
            **self.kwargs(small_wiki, embedder, typing_provider=FailingTyping()),
        )
        assert typed.case is MentionCase.PAGE_MATCH

    def test_retrieved_category_expands_ontology(self, theme, ontology, small_wiki, embedder):
        before = set(ontology.category_names())
        typed = type_mention(
            "spent cells", "d", (0, 11), "Spent cells pile up at recycling depots.",
            ontology, theme, **self.kwargs(small_wiki, embedder),
        )
        after = set(ontology.category_names())
        assert typed.case is MentionCase.RETRIEVED
        assert typed.category == "Battery recycling"
        assert after - before == {"Battery recycling"}
        ontology.validate()

    def test_every_typed_category_in_ontology_or_irrelevant(
        self, theme, ontology, small_wiki, embedder
    ):
        for surface in ["golf carts", "spent cells", "mystery gadget", "forklift"]:
            typed = type_mention(
                surface, "d", (0, len(surface)),
                "Spent cells pile up at recycling depots.",
                ontology, theme, **self.kwargs(small_wiki, embedder),
            )
            assert typed.category is None or typed.category in ontology

    def test_argmax_invariant_under_positive_scaling(
        self, theme, ontology, small_wiki, embedder
    ):
        rng = random.Random(7)
        baseline = type_mention(
            "forklift", "d", (0, 8), "Forklifts move goods.", ontology, theme,
            **self.kwargs(small_wiki, embedder),
        )
        for _ in range(10):
            factor = rng.uniform(0.01, 100.0)
            scaled = ScaledEmbedding(embedder, factor)
            typed = type_mention(
                "forklift", "d", (0, 8), "Forklifts move goods.", ontology, theme,
                **self.kwargs(small_wiki, scaled),
            )
            assert typed.category == baseline.category

    def test_theme_threshold_monotonicity(self, theme, ontology, small_wiki, embedder):
        # Raising the threshold can only push mentions toward IRRELEVANT.
        previously_irrelevant = False
        for threshold in [0.0, 0.2, 0.4, 0.6, 0.8, 1.01]:
            typed = type_by_page(
                "golf carts", "d", (0, 10), theme,
                wiki=small_wiki, embedder=embedder,
                config=TypingConfig(theme_threshold=threshold),
            )
            irrelevant = typed.case is MentionCase.IRRELEVANT
            if previously_irrelevant:
                assert irrelevant
            previously_irrelevant = irrelevant
        assert previously_irrelevant


class TestMentionContext:
    def test_radius_one_includes_neighbors(self):
        doc = Document.from_text("d", "One. Two. Three. Four.")
        assert mention_context(doc, 2, radius=1) == "Two. Three. Four."

    def test_radius_clipped_at_document_bounds(self):
        doc = Document.from_text("d", "One. Two.")
        assert mention_context(doc, 0, radius=3) == "One. Two."
