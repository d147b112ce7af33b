from __future__ import annotations

import pytest

from themekg.model import (
    RelationPhrase,
    Theme,
    Triple,
    TripleSource,
)
from themekg.providers.mocks import HashEmbedding, MockWiki

# Theme description used across test fixtures; the thresholds chosen in
# individual tests were picked against similarities computed under the
# shipped 64-dimensional hash embedding.
EVB_DESCRIPTION = (
    "Batteries used in electric vehicles and recreational vehicles: lead acid, "
    "lithium, and deep cycle battery types, battery charging and battery "
    "recycling, and batteries powering electric vehicles and recreational vehicles."
)


@pytest.fixture(scope="session")
def embedder() -> HashEmbedding:
    return HashEmbedding(dim=64)


@pytest.fixture()
def theme() -> Theme:
    return Theme(
        name="EV battery",
        description=EVB_DESCRIPTION,
        root_categories=("Battery (Electricity)", "Vehicles"),
    )


@pytest.fixture()
def small_wiki() -> MockWiki:
    return MockWiki(
        categories={
            "Battery (Electricity)": [
                "Rechargeable batteries",
                "Battery chargers",
                "Battery inventors",
                "Battery chicken farming",
            ],
            "Rechargeable batteries": ["Lead-acid batteries"],
            "Vehicles": ["Electric vehicles", "Recreational vehicles"],
        },
        pages={
            "Forklift": ["Electric vehicles", "Warehouse equipment"],
            "Golf carts": ["Electric vehicles", "Golf"],
            "Deep cycle batteries": ["Rechargeable batteries"],
        },
        universe=["Battery recycling", "Music festivals"],
    )


def make_triple(
    head: str,
    relation: str,
    tail: str,
    *,
    head_category: str = "Rechargeable batteries",
    tail_category: str = "Electric vehicles",
    doc_id: str = "doc1",
    span: tuple[int, int] = (0, 10),
    source: TripleSource = TripleSource.ONTOLOGY_SELECTED,
) -> Triple:
    return Triple(
        head=head,
        relation=RelationPhrase(relation),
        tail=tail,
        head_category=head_category,
        tail_category=tail_category,
        provenance=((doc_id, span),),
        source=source,
    )
