from __future__ import annotations

import random

import numpy as np
import pytest

from themekg.model import OntologyError, Theme
from themekg.ontology import (
    attach_closest,
    build_entity_ontology,
    expand_with_category,
    export_ontology,
    filter_edges,
    import_ontology,
)
from themekg.providers.mocks import HashEmbedding, MockWiki


def cos(embedder, a, b):
    return float(np.dot(embedder.embed(a), embedder.embed(b)))


def assert_acyclic(edges):
    """Independent cycle check: DFS with a recursion stack."""
    children = {}
    for parent, child in edges:
        children.setdefault(parent, []).append(child)
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {}

    def visit(node):
        color[node] = GRAY
        for nxt in children.get(node, []):
            state = color.get(nxt, WHITE)
            if state == GRAY:
                raise AssertionError(f"cycle through {nxt!r}")
            if state == WHITE:
                visit(nxt)
        color[node] = BLACK

    for node in list(children):
        if color.get(node, WHITE) == WHITE:
            visit(node)


def reachable_from(roots, edges):
    """Independent BFS reachability used as the removal oracle."""
    children = {}
    for parent, child in edges:
        children.setdefault(parent, set()).add(child)
    seen = set(roots)
    frontier = list(roots)
    while frontier:
        node = frontier.pop()
        for nxt in children.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return seen


class TestBuildEntityOntology:
    def test_fixture_build_contains_expected_categories(self, theme, small_wiki, embedder):
        onto = build_entity_ontology(
            theme, small_wiki, embedder, max_depth=4, edge_threshold=0.35
        )
        names = set(onto.category_names())
        assert {"Rechargeable batteries", "Battery chargers", "Battery inventors"} <= names

    def test_low_similarity_edge_excluded(self, theme, small_wiki, embedder):
        # cos("Battery (Electricity)", "Battery chicken farming") = 0.2970...,
        # below the 0.35 threshold while every wanted edge is above it.
        assert cos(embedder, "Battery (Electricity)", "Battery chicken farming") < 0.35
        onto = build_entity_ontology(
            theme, small_wiki, embedder, max_depth=4, edge_threshold=0.35
        )
        assert "Battery chicken farming" not in onto

    def test_max_depth_one_keeps_only_roots_and_children(self, theme, small_wiki, embedder):
        onto = build_entity_ontology(
            theme, small_wiki, embedder, max_depth=1, edge_threshold=-1.0
        )
        assert all(onto.depth(name) <= 1 for name in onto.category_names())
        assert "Lead-acid batteries" not in onto  # depth 2 in the fixture

    def test_unknown_root_raises(self, small_wiki, embedder):
        theme = Theme(name="t", description="d", root_categories=("No Such Root",))
        with pytest.raises(OntologyError):
            build_entity_ontology(theme, small_wiki, embedder)

    def test_deterministic_given_provider(self, theme, small_wiki, embedder):
        build = lambda: build_entity_ontology(
            theme, small_wiki, embedder, max_depth=3, edge_threshold=0.35
        ).to_dict()
        assert build() == build()

    def test_cyclic_provider_yields_dag(self, embedder):
        wiki = MockWiki(
            categories={
                "alpha systems": ["beta systems"],
                "beta systems": ["gamma systems"],
                "gamma systems": ["alpha systems", "beta systems"],
            },
            pages={},
        )
        theme = Theme(name="t", description="d", root_categories=("alpha systems",))
        onto = build_entity_ontology(theme, wiki, embedder, edge_threshold=-1.0)
        assert_acyclic(onto.edges())
        onto.validate()


def random_category_graph(rng: random.Random) -> tuple[MockWiki, list[str]]:
    """A random category graph over token-overlapping names, with cycles."""
    vocab = ["power", "storage", "cell", "grid", "charge", "volt", "amp", "system"]
    n = rng.randint(4, 10)
    names = []
    for i in range(n):
        tokens = rng.sample(vocab, rng.randint(1, 3))
        names.append(" ".join(tokens) + f" {i}")
    children: dict[str, list[str]] = {name: [] for name in names}
    for _ in range(rng.randint(n, 3 * n)):
        parent, child = rng.choice(names), rng.choice(names)
        if child not in children[parent]:
            children[parent].append(child)
    # guarantee at least one directed cycle
    a, b = rng.sample(names, 2)
    if b not in children[a]:
        children[a].append(b)
    if a not in children[b]:
        children[b].append(a)
    roots = rng.sample(names, rng.randint(1, 2))
    return MockWiki(categories=children, pages={}), roots


class TestRandomizedGraphProperties:
    def test_acyclic_and_root_reachable_over_100_random_graphs(self, embedder):
        for seed in range(100):
            rng = random.Random(seed)
            wiki, roots = random_category_graph(rng)
            theme = Theme(name="t", description="d", root_categories=tuple(roots))
            onto = build_entity_ontology(
                theme, wiki, embedder, max_depth=4,
                edge_threshold=rng.uniform(-1.0, 0.6),
            )
            onto.validate()
            assert_acyclic(onto.edges())
            reachable = reachable_from(onto.roots, onto.edges())
            assert reachable == set(onto.category_names())

    def test_threshold_monotonicity_over_100_random_graphs(self, embedder):
        for seed in range(100, 200):
            rng = random.Random(seed)
            wiki, roots = random_category_graph(rng)
            theme = Theme(name="t", description="d", root_categories=tuple(roots))
            lo, hi = sorted((rng.uniform(-1.0, 0.8), rng.uniform(-1.0, 0.8)))
            cats_lo = set(
                build_entity_ontology(
                    theme, wiki, embedder, max_depth=4, edge_threshold=lo
                ).category_names()
            )
            cats_hi = set(
                build_entity_ontology(
                    theme, wiki, embedder, max_depth=4, edge_threshold=hi
                ).category_names()
            )
            assert cats_hi <= cats_lo


@pytest.fixture()
def seven_node_ontology(embedder):
    """Seven nodes; the edge into "chemical cells" has near-zero similarity
    so a mid-range threshold cuts exactly that edge and strands its subtree."""
    wiki = MockWiki(
        categories={
            "power systems": ["power storage systems", "power grid systems"],
            "power storage systems": ["storage cell systems", "chemical cells"],
            "chemical cells": ["dry chemical cells", "wet chemical cells"],
        },
        pages={},
    )
    theme = Theme(name="t", description="d", root_categories=("power systems",))
    onto = build_entity_ontology(theme, wiki, embedder, edge_threshold=-1.0)
    assert len(onto) == 7
    return onto


class TestFilterEdges:
    def test_threshold_minus_one_is_noop(self, seven_node_ontology, embedder):
        filtered = filter_edges(seven_node_ontology, -1.0, embedder=embedder)
        assert filtered.to_dict() == seven_node_ontology.to_dict()

    def test_threshold_above_one_keeps_only_roots(self, seven_node_ontology, embedder):
        filtered = filter_edges(seven_node_ontology, 1.0001, embedder=embedder)
        assert set(filtered.category_names()) == {"power systems"}
        assert filtered.edges() == ()

    def test_cut_edge_removes_unreachable_subtree(self, seven_node_ontology, embedder):
        weakest = cos(embedder, "power storage systems", "chemical cells")
        others = [
            cos(embedder, p, c)
            for p, c in seven_node_ontology.edges()
            if c != "chemical cells"
        ]
        threshold = weakest + 1e-6
        assert all(sim >= threshold for sim in others)

        filtered = filter_edges(seven_node_ontology, threshold, embedder=embedder)
        kept_edges = [
            (p, c)
            for p, c in seven_node_ontology.edges()
            if cos(embedder, p, c) >= threshold
        ]
        expected = reachable_from(["power systems"], kept_edges)
        assert set(filtered.category_names()) == expected
        assert "chemical cells" not in filtered
        assert "dry chemical cells" not in filtered
        assert "wet chemical cells" not in filtered


class TestExpandWithCategory:
    def test_attach_under_existing_parent(self, theme, small_wiki, embedder):
        onto = build_entity_ontology(theme, small_wiki, embedder, edge_threshold=0.35)
        expand_with_category(
            onto, "flooded lead-acid batteries", "Lead-acid batteries", max_depth=4
        )
        assert onto.depth("flooded lead-acid batteries") == onto.depth("Lead-acid batteries") + 1
        onto.validate()

    def test_unknown_parent_raises(self, theme, small_wiki, embedder):
        onto = build_entity_ontology(theme, small_wiki, embedder, edge_threshold=0.35)
        with pytest.raises(OntologyError):
            expand_with_category(onto, "anything", "missing parent")

    def test_depth_overflow_rejected(self, theme, small_wiki, embedder):
        onto = build_entity_ontology(theme, small_wiki, embedder, edge_threshold=0.35)
        depth = onto.depth("Lead-acid batteries")
        with pytest.raises(OntologyError):
            expand_with_category(
                onto, "overflow child", "Lead-acid batteries", max_depth=depth
            )

    def test_attach_closest_picks_most_similar_parent(self, theme, small_wiki, embedder):
        onto = build_entity_ontology(theme, small_wiki, embedder, edge_threshold=0.35)
        parent = attach_closest(onto, "Battery recycling", embedder, max_depth=4)
        best = max(
            (name for name in onto.category_names() if name != "Battery recycling"),
            key=lambda name: cos(embedder, "Battery recycling", name),
        )
        assert parent == best


class TestOntologySerialization:
    def test_round_trip_identity(self, theme, small_wiki, embedder, tmp_path):
        onto = build_entity_ontology(theme, small_wiki, embedder, edge_threshold=0.35)
        path = tmp_path / "ontology.json"
        export_ontology(onto, path)
        loaded = import_ontology(path)
        assert loaded.to_dict() == onto.to_dict()

    def test_import_validates_invariants(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(
            '{"categories": [{"name": "A", "depth": 0}, {"name": "B", "depth": 2}],'
            ' "edges": [["A", "B"]], "roots": ["A"]}'
        )
        with pytest.raises(OntologyError):
            import_ontology(path)
