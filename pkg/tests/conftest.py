from __future__ import annotations

import numpy as np
import pytest

from kgexam.graph import Entity, ParameterizedKG, PredicateDef


def make_pkg(triplets, groups=None, aliases=None, dead=()):
    """Small-graph helper: entities/predicates are synthesized from the ids
    appearing in the triplets."""
    groups = groups or {}
    aliases = aliases or {}
    entity_ids = sorted({t[0] for t in triplets} | {t[2] for t in triplets})
    predicate_ids = sorted({t[1] for t in triplets})
    entities = {
        eid: Entity(
            id=eid,
            label=f"{eid} label",
            aliases=tuple(aliases.get(eid, ())),
            groups=dict(groups.get(eid, {})),
        )
        for eid in entity_ids
    }
    predicates = {pid: PredicateDef(id=pid, label=f"{pid} label") for pid in predicate_ids}
    rows = [(s, p, o, (s, p, o) not in set(dead)) for s, p, o in triplets]
    return ParameterizedKG.from_triplets(rows, entities, predicates)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def chain_pkg():
    # A -> B -> C -> D
    return make_pkg([("A", "p", "B"), ("B", "p", "C"), ("C", "p", "D")])


@pytest.fixture
def star_pkg():
    return make_pkg([("C", "p", "X1"), ("C", "p", "X2"), ("C", "p", "X3")])


@pytest.fixture
def triangle_pkg():
    # 3-edge clique: every pair of edges shares an endpoint
    return make_pkg([("A", "p", "B"), ("B", "p", "C"), ("C", "p", "A")])
