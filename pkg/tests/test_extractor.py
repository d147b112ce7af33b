from __future__ import annotations

import pytest

from themekg.extractor import (
    ExtractionStats,
    extract_document,
    fallback_prompt,
    pair_contexts,
    select_relation,
    selection_prompt,
    fallback_extract,
    MentionPair,
)
from themekg.model import (
    Document,
    EntityOntology,
    MentionCase,
    NONE_RELATION,
    RelationOntology,
    RelationPhrase,
    Theme,
    TripleSource,
    TypedMention,
)
from themekg.providers.mocks import ScriptedLlm
from themekg.relations import retrieve_candidates

EXAMPLE_SENTENCE = (
    "Deep cycle batteries are used to provide continuous electricity "
    "to run electric vehicles like forklifts"
)


def mention(doc: Document, surface: str, entity: str, category: str,
            case=MentionCase.PAGE_MATCH) -> TypedMention:
    start = doc.text.casefold().index(surface.casefold())
    return TypedMention(
        surface=doc.text[start : start + len(surface)], doc_id=doc.doc_id,
        span=(start, start + len(surface)), entity_name=entity,
        category=category, case=case,
    )


@pytest.fixture()
def theme():
    return Theme(name="EV battery", description="electric vehicle batteries",
                 root_categories=("Battery (Electricity)", "Vehicles"))


@pytest.fixture()
def ontology():
    onto = EntityOntology()
    onto.add_root("Battery (Electricity)")
    onto.add_root("Vehicles")
    onto.add_child("Battery (Electricity)", "Rechargeable batteries")
    onto.add_child("Vehicles", "Electric vehicles")
    onto.add_child("Vehicles", "Recreational vehicles")
    return onto


@pytest.fixture()
def example_doc():
    return Document.from_text("example3", EXAMPLE_SENTENCE)


@pytest.fixture()
def example_mentions(example_doc):
    return [
        mention(example_doc, "deep cycle batteries", "Deep cycle batteries",
                "Rechargeable batteries"),
        mention(example_doc, "continuous electricity", "continuous electricity",
                "Battery (Electricity)", case=MentionCase.CONTEXT_TYPED),
        mention(example_doc, "electric vehicles", "Electric vehicles",
                "Electric vehicles"),
        mention(example_doc, "forklifts", "Forklifts", "Electric vehicles"),
    ]


def example_relation_ontology() -> RelationOntology:
    ro = RelationOntology()
    ro.add(("Rechargeable batteries", "Electric vehicles"),
           RelationPhrase("be power source of"), "generated")
    ro.add(("Rechargeable batteries", "Electric vehicles"),
           RelationPhrase("be recycled from"), "generated")
    ro.add(("Rechargeable batteries", "Electric vehicles"),
           RelationPhrase("be managed by"), "generated")
    ro.add(("Rechargeable batteries", "Battery (Electricity)"),
           RelationPhrase("provide"), "generated")
    ro.add(("Electric vehicles", "Electric vehicles"),
           RelationPhrase("include"), "generated")
    ro.add(("Electric vehicles", "Rechargeable batteries"),
           RelationPhrase("use"), "generated")
    for c1 in ["Battery (Electricity)", "Rechargeable batteries",
               "Electric vehicles", "Vehicles", "Recreational vehicles"]:
        for c2 in ["Battery (Electricity)", "Rechargeable batteries",
                   "Electric vehicles", "Vehicles", "Recreational vehicles"]:
            if not ro.has_entry((c1, c2)):
                ro.mark_empty((c1, c2))
    return ro


# Relations asserted for the example sentence; every other ordered pair
# answers none at selection and none at fallback.
EXAMPLE_DECISIONS = {
    ("Deep cycle batteries", "continuous electricity"):
        "(deep cycle batteries, provide, continuous electricity)",
    ("Deep cycle batteries", "Electric vehicles"):
        "(deep cycle batteries, be power source of, electric vehicles)",
    ("Deep cycle batteries", "Forklifts"):
        "(deep cycle batteries, be power source of, forklifts)",
    ("Electric vehicles", "Forklifts"):
        "(electric vehicles, include, forklifts)",
}


def script_for(doc, mentions, ro, eo, theme, decisions) -> dict[str, str]:
    """Scripted replies for every selection/fallback prompt the extractor
    will issue for this document."""
    llm_probe = ScriptedLlm({})
    script: dict[str, str] = {}
    for pair in pair_contexts(doc, mentions):
        candidates = retrieve_candidates(
            ro, eo, (pair.head.category, pair.tail.category),
            theme=theme, llm=llm_probe,
        )
        key = (pair.head.entity_name, pair.tail.entity_name)
        reply = decisions.get(key, NONE_RELATION)
        real = [c for c in candidates if c.normalized != NONE_RELATION]
        if real:
            script[selection_prompt(pair, candidates)] = reply
            if reply == NONE_RELATION:
                script[fallback_prompt(pair)] = NONE_RELATION
        else:
            assert reply == NONE_RELATION, f"no candidates to select {reply!r} from"
            script[fallback_prompt(pair)] = NONE_RELATION
    return script


class TestPairContexts:
    def test_example_pairs_present(self, example_doc, example_mentions):
        pairs = {
            (p.head.entity_name, p.tail.entity_name)
            for p in pair_contexts(example_doc, example_mentions)
        }
        assert ("Deep cycle batteries", "Forklifts") in pairs
        assert ("Electric vehicles", "Forklifts") in pairs

    def test_single_mention_no_pairs(self, example_doc, example_mentions):
        assert pair_contexts(example_doc, example_mentions[:1]) == []

    def test_three_mentions_six_ordered_pairs(self, example_doc, example_mentions):
        # 3 * 2 ordered pairs by enumeration
        assert len(pair_contexts(example_doc, example_mentions[:3])) == 6

    def test_irrelevant_mentions_excluded(self, example_doc, example_mentions):
        irrelevant = TypedMention(
            surface="x", doc_id=example_doc.doc_id, span=(0, 1),
            entity_name="x", category=None, case=MentionCase.IRRELEVANT,
        )
        pairs = pair_contexts(example_doc, example_mentions[:1] + [irrelevant])
        assert pairs == []

    def test_same_entity_pairs_skipped(self, example_doc):
        m1 = mention(example_doc, "deep cycle batteries", "Deep cycle batteries",
                     "Rechargeable batteries")
        m2 = mention(example_doc, "electric vehicles", "DEEP CYCLE BATTERIES",
                     "Rechargeable batteries")
        assert pair_contexts(example_doc, [m1, m2]) == []

    def test_window_limits_cross_sentence_pairs(self):
        doc = Document.from_text(
            "d", "Batteries power carts. Filler sentence here. Chargers need plugs."
        )
        m1 = mention(doc, "Batteries", "Batteries", "Battery (Electricity)")
        m2 = mention(doc, "Chargers", "Chargers", "Battery chargers")
        assert pair_contexts(doc, [m1, m2], window=1) == []
        pairs = pair_contexts(doc, [m1, m2], window=2)
        assert {(p.head.entity_name, p.tail.entity_name) for p in pairs} == {
            ("Batteries", "Chargers"), ("Chargers", "Batteries")
        }
        assert pairs[0].context == doc.text


class TestSelectRelation:
    def pair(self, example_doc, example_mentions) -> MentionPair:
        return pair_contexts(example_doc, example_mentions)[0]

    def test_candidate_chosen(self, example_doc, example_mentions):
        pair = next(
            p for p in pair_contexts(example_doc, example_mentions)
            if (p.head.entity_name, p.tail.entity_name)
            == ("Deep cycle batteries", "Forklifts")
        )
        candidates = [RelationPhrase("be power source of"), RelationPhrase("be managed by")]
        llm = ScriptedLlm({
            selection_prompt(pair, candidates):
                "(deep cycle batteries, be power source of, forklifts)"
        })
        chosen = select_relation(pair, candidates, llm)
        assert chosen is not None and chosen.normalized == "be power source of"

    def test_none_reply(self, example_doc, example_mentions):
        pair = self.pair(example_doc, example_mentions)
        candidates = [RelationPhrase("be managed by")]
        llm = ScriptedLlm({selection_prompt(pair, candidates): "none"})
        assert select_relation(pair, candidates, llm) is None

    def test_reply_outside_candidates_is_none_with_warning(
        self, example_doc, example_mentions, caplog
    ):
        pair = self.pair(example_doc, example_mentions)
        candidates = [RelationPhrase("be managed by")]
        llm = ScriptedLlm({
            selection_prompt(pair, candidates): "(a, invented relation, b)"
        })
        with caplog.at_level("WARNING"):
            assert select_relation(pair, candidates, llm) is None
        assert any("not among the candidates" in r.message for r in caplog.records)

    def test_unparseable_reply_reprompts_once_then_none(
        self, example_doc, example_mentions
    ):
        pair = self.pair(example_doc, example_mentions)
        candidates = [RelationPhrase("be managed by")]
        calls = []

        class CountingLlm(ScriptedLlm):
            def complete(self, prompt):
                calls.append(prompt)
                return super().complete(prompt)

        llm = CountingLlm({selection_prompt(pair, candidates): "gibberish with no tuple"})
        assert select_relation(pair, candidates, llm) is None
        assert len(calls) == 2

    def test_empty_candidates_short_circuit_without_llm(
        self, example_doc, example_mentions
    ):
        pair = self.pair(example_doc, example_mentions)

        class ExplodingLlm(ScriptedLlm):
            def complete(self, prompt):
                raise AssertionError("LLM must not be queried without candidates")

        assert select_relation(pair, [], ExplodingLlm({})) is None

    def test_sentinel_is_last_in_prompt(self, example_doc, example_mentions):
        pair = self.pair(example_doc, example_mentions)
        prompt = selection_prompt(pair, [RelationPhrase("use")])
        assert prompt.rstrip().endswith("[use, none]")


class TestFallbackExtract:
    def fallback_pair(self) -> MentionPair:
        doc = Document.from_text(
            "rv", "Recreational vehicles are equipped with auxiliary batteries."
        )
        m1 = mention(doc, "recreational vehicles", "Recreational vehicles",
                     "Recreational vehicles")
        m2 = mention(doc, "auxiliary batteries", "Auxiliary batteries",
                     "Battery (Electricity)")
        return pair_contexts(doc, [m1, m2])[0]

    def test_discovered_relation_becomes_triple_and_enriches(self):
        pair = self.fallback_pair()
        ro = RelationOntology()
        llm = ScriptedLlm({
            fallback_prompt(pair):
                "(recreational vehicles, be equipped with, auxiliary batteries)"
        })
        triple = fallback_extract(pair, llm, ro)
        assert triple is not None
        assert triple.source is TripleSource.FALLBACK_EXTRACTED
        assert triple.relation.normalized == "be equipped with"
        stored = {
            p.text
            for p, prov in ro.phrases(("Recreational vehicles", "Battery (Electricity)"))
            if prov == "enriched"
        }
        assert stored == {"be equipped with"}

    def test_none_reply_produces_no_triple(self):
        pair = self.fallback_pair()
        ro = RelationOntology()
        llm = ScriptedLlm({fallback_prompt(pair): "none"})
        assert fallback_extract(pair, llm, ro) is None
        assert ro.phrases(("Recreational vehicles", "Battery (Electricity)")) == ()

    def test_enrichment_visible_on_second_retrieval(self, theme, ontology):
        pair = self.fallback_pair()
        ro = RelationOntology()
        for c1 in ontology.category_names():
            for c2 in ontology.category_names():
                ro.mark_empty((c1, c2))
        probe = ScriptedLlm({})
        before = retrieve_candidates(
            ro, ontology, ("Recreational vehicles", "Battery (Electricity)"),
            theme=theme, llm=probe,
        )
        assert [c.text for c in before] == [NONE_RELATION]
        llm = ScriptedLlm({
            fallback_prompt(pair):
                "(recreational vehicles, be equipped with, auxiliary batteries)"
        })
        fallback_extract(pair, llm, ro)
        after = retrieve_candidates(
            ro, ontology, ("Recreational vehicles", "Battery (Electricity)"),
            theme=theme, llm=probe,
        )
        assert [c.text for c in after] == ["be equipped with", NONE_RELATION]


class TestExtractDocument:
    def test_example_three_reproduced_exactly(
        self, example_doc, example_mentions, ontology, theme
    ):
        ro = example_relation_ontology()
        script = script_for(
            example_doc, example_mentions, ro, ontology, theme, EXAMPLE_DECISIONS
        )
        stats = ExtractionStats()
        triples = extract_document(
            example_doc, example_mentions, ro, ontology, theme,
            ScriptedLlm(script), stats=stats,
        )
        assert {
            (t.head.casefold(), t.relation.normalized, t.tail.casefold())
            for t in triples
        } == {
            ("deep cycle batteries", "provide", "continuous electricity"),
            ("deep cycle batteries", "be power source of", "electric vehicles"),
            ("deep cycle batteries", "be power source of", "forklifts"),
            ("electric vehicles", "include", "forklifts"),
        }
        assert all(t.source is TripleSource.ONTOLOGY_SELECTED for t in triples)
        assert stats.pairs == 12
        assert stats.errors == 0

    def test_zero_mentions_empty_output(self, example_doc, ontology, theme):
        assert extract_document(
            example_doc, [], RelationOntology(), ontology, theme, ScriptedLlm({})
        ) == []

    def test_selected_relations_are_members_of_recomputed_candidates(
        self, example_doc, example_mentions, ontology, theme
    ):
        ro = example_relation_ontology()
        script = script_for(
            example_doc, example_mentions, ro, ontology, theme, EXAMPLE_DECISIONS
        )
        triples = extract_document(
            example_doc, example_mentions, ro, ontology, theme, ScriptedLlm(script)
        )
        probe = ScriptedLlm({})
        for triple in triples:
            members = {
                c.normalized
                for c in retrieve_candidates(
                    ro, ontology, (triple.head_category, triple.tail_category),
                    theme=theme, llm=probe,
                )
            }
            assert triple.relation.normalized in members

    def test_per_pair_errors_do_not_sink_document(
        self, example_doc, example_mentions, ontology, theme
    ):
        ro = example_relation_ontology()
        stats = ExtractionStats()
        # Empty script: every selection prompt is unscripted and raises.
        triples = extract_document(
            example_doc, example_mentions, ro, ontology, theme,
            ScriptedLlm({}), stats=stats,
        )
        assert triples == []
        assert stats.errors == stats.pairs == 12
