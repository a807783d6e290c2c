#!/usr/bin/env python3
"""Generate the frozen country-topic SPARQL fixture.

Emits a walk dump plus sidecars (aliases, groups, language counts,
blocklist, seeds) into fixtures/country/, engineered so that a 3-step
forward+backward walk from the 16 seeds, followed by the entity filters
(min language count 2, alias required) and the shipped blocklist, rebuilds
a graph with exactly the reference statistics recorded in manifest.json:
12,760 nodes, 338 predicates, 7,844 active and 9,441 dead edges.

Layout of the synthetic graph:
  - 16 seed countries at layer 0; 3,000 / 6,000 / 3,744 entities at layers
    1-3, each with one discovery edge to the previous layer (random
    orientation), plus 4,541 extra edges whose shallower endpoint sits at
    layer <= 2 so every edge is reachable by a 3-step walk.
  - 240 chaff entities attached to seeds: half alias-free, half mentioned
    in a single language.  The filters remove all of them.
  - 9,441 edges carry blocklisted predicates (the dead set), 7,844 carry
    allowed ones; every one of the 338 predicates is used at least once.

Deterministic for a fixed seed; rerunning regenerates identical files.
"""

from __future__ import annotations

import gzip
import json
import sys
from pathlib import Path

import numpy as np

OUT_DIR = Path(__file__).resolve().parent.parent / "fixtures" / "country"

SEED_COUNTRIES = [
    ("Q100", "Austria", "AT"), ("Q101", "Mexico", "MX"), ("Q102", "Italy", "IT"),
    ("Q103", "Canada", "CA"), ("Q104", "Philippines", "PH"), ("Q105", "United Kingdom", "UK"),
    ("Q106", "France", "FR"), ("Q107", "Germany", "DE"), ("Q108", "Japan", "JP"),
    ("Q109", "Brazil", "BR"), ("Q110", "Australia", "AU"), ("Q111", "Egypt", "EG"),
    ("Q112", "Norway", "NO"), ("Q113", "India", "IN"), ("Q114", "Spain", "ES"),
    ("Q115", "Kenya", "KE"),
]

ALLOWED_REAL = [
    "head of state", "head of government", "capital", "currency", "driving side",
    "located in time zone", "electrical plug type", "emergency phone number",
    "official language", "continent", "shares border with", "highest point",
    "anthem", "flag", "legislative body", "top-level internet domain",
    "calling code", "national dish", "patron saint", "largest city",
    "railway traffic side", "water as percent of area", "age of majority", "marriageable age",
]

BLOCKED_REAL = [
    "member of", "domestic relation", "contains the administrative territorial entity",
]

LAYER_SIZES = (3000, 6000, 3744)
N_PREDICATES = 338
N_BLOCKED_PREDICATES = 120
N_DEAD_EDGES = 9441
N_ACTIVE_EDGES = 7844
N_CHAFF = 240
RNG_SEED = 2718


def build():
    rng = np.random.default_rng(RNG_SEED)

    # predicates: ids P001.. with the blocked set first
    predicates = {}
    blocked_ids = []
    for i in range(N_BLOCKED_PREDICATES):
        pid = f"P{i + 1:03d}"
        label = BLOCKED_REAL[i] if i < len(BLOCKED_REAL) else f"structural link {i + 1:03d}"
        predicates[pid] = label
        blocked_ids.append(pid)
    allowed_ids = []
    for i in range(N_BLOCKED_PREDICATES, N_PREDICATES):
        pid = f"P{i + 1:03d}"
        k = i - N_BLOCKED_PREDICATES
        label = ALLOWED_REAL[k] if k < len(ALLOWED_REAL) else f"country property {k + 1:03d}"
        predicates[pid] = label
        allowed_ids.append(pid)

    # entities by layer; every non-seed remembers a discovery parent
    entities: dict[str, dict] = {}
    layers: dict[str, int] = {}
    for qid, label, alias in SEED_COUNTRIES:
        entities[qid] = {"label": label, "alias": alias, "country": label}
        layers[qid] = 0
    next_id = 1000
    layer_members: list[list[str]] = [[qid for qid, _, _ in SEED_COUNTRIES]]
    pairs: set[tuple[str, str]] = set()
    edge_pairs: list[tuple[str, str]] = []

    for depth, size in enumerate(LAYER_SIZES, start=1):
        members = []
        parents = layer_members[depth - 1]
        for k in range(size):
            qid = f"Q{next_id}"
            next_id += 1
            parent = parents[k % len(parents)]
            country = entities[parent]["country"]
            entities[qid] = {
                "label": f"{country} topic {next_id}",
                "alias": f"E-{next_id}",
                "country": country,
            }
            layers[qid] = depth
            members.append(qid)
            # discovery edge, random orientation
            pair = (parent, qid) if rng.random() < 0.5 else (qid, parent)
            pairs.add(pair)
            edge_pairs.append(pair)
        layer_members.append(members)

    all_ids = list(entities)
    shallow_ids = [e for e in all_ids if layers[e] <= 2]
    n_extra = N_DEAD_EDGES + N_ACTIVE_EDGES - len(edge_pairs)
    while n_extra > 0:
        u = shallow_ids[int(rng.integers(len(shallow_ids)))]
        v = all_ids[int(rng.integers(len(all_ids)))]
        if u == v:
            continue
        pair = (u, v) if rng.random() < 0.5 else (v, u)
        # the shallower endpoint keeps the pair 3-step reachable either way
        if pair in pairs:
            continue
        pairs.add(pair)
        edge_pairs.append(pair)
        n_extra -= 1

    # predicate assignment: exact dead/active split, every predicate used
    order = rng.permutation(len(edge_pairs))
    dead_slots = order[:N_DEAD_EDGES]
    active_slots = order[N_DEAD_EDGES:]
    edge_predicates: dict[int, str] = {}
    for j, slot in enumerate(dead_slots):
        edge_predicates[int(slot)] = (
            blocked_ids[j] if j < len(blocked_ids)
            else blocked_ids[int(rng.integers(len(blocked_ids)))]
        )
    for j, slot in enumerate(active_slots):
        edge_predicates[int(slot)] = (
            allowed_ids[j] if j < len(allowed_ids)
            else allowed_ids[int(rng.integers(len(allowed_ids)))]
        )

    triples = [
        (s, edge_predicates[i], o) for i, (s, o) in enumerate(edge_pairs)
    ]

    # chaff: filter fodder attached to seeds, removed during rebuild
    chaff_ids = []
    chaff_triples = []
    for k in range(N_CHAFF):
        qid = f"QX{k:04d}"
        seed_qid = SEED_COUNTRIES[k % len(SEED_COUNTRIES)][0]
        has_alias = k % 2 == 0  # alias-free half dies on the alias filter,
        entities[qid] = {       # the other half on the language-count filter
            "label": f"chaff item {k:04d}",
            "alias": f"X-{k:04d}" if has_alias else None,
            "country": entities[seed_qid]["country"],
        }
        chaff_ids.append(qid)
        pred = allowed_ids[int(rng.integers(len(allowed_ids)))]
        chaff_triples.append((qid, pred, seed_qid))

    return entities, predicates, triples, chaff_triples, blocked_ids, chaff_ids


def write_fixture(entities, predicates, triples, chaff_triples, blocked_ids, chaff_ids):
    OUT_DIR.mkdir(parents=True, exist_ok=True)

    def desc(eid):
        return f"synthetic country-topic entity {eid}"

    with gzip.open(OUT_DIR / "dump.jsonl.gz", "wt", encoding="utf-8") as fh:
        for s, p, o in triples + chaff_triples:
            fh.write(json.dumps({
                "subject": s, "subjectLabel": entities[s]["label"], "subjectDesc": desc(s),
                "predicate": p, "predicateLabel": predicates[p],
                "predicateDesc": f"synthetic predicate {p}",
                "object": o, "objectLabel": entities[o]["label"], "objectDesc": desc(o),
            }, ensure_ascii=False, sort_keys=True) + "\n")

    aliases = {
        eid: [meta["alias"]] for eid, meta in sorted(entities.items()) if meta["alias"]
    }
    with gzip.open(OUT_DIR / "aliases.json.gz", "wt", encoding="utf-8") as fh:
        json.dump(aliases, fh, sort_keys=True)

    groups = {eid: {"country": meta["country"]} for eid, meta in sorted(entities.items())}
    with gzip.open(OUT_DIR / "groups.json.gz", "wt", encoding="utf-8") as fh:
        json.dump(groups, fh, sort_keys=True)

    chaff = set(chaff_ids)
    language_counts = {
        eid: (1 if eid in chaff else 2 + (int(eid.lstrip("QX") or 0) % 30))
        for eid in sorted(entities)
    }
    with gzip.open(OUT_DIR / "language_counts.json.gz", "wt", encoding="utf-8") as fh:
        json.dump(language_counts, fh, sort_keys=True)

    blocklist_lines = ["# predicates whose edges are structural, not worth asking about"]
    blocklist_lines += [f"{pid}  # {predicates[pid]}" for pid in blocked_ids]
    (OUT_DIR / "blocklist.txt").write_text("\n".join(blocklist_lines) + "\n", encoding="utf-8")

    (OUT_DIR / "seeds.txt").write_text(
        "\n".join(f"{qid}  # {label}" for qid, label, _ in SEED_COUNTRIES) + "\n",
        encoding="utf-8",
    )

    manifest = {
        "generator_seed": RNG_SEED,
        "raw": {
            "entities": len(entities),
            "triplets": len(triples) + len(chaff_triples),
            "chaff_entities": len(chaff_ids),
        },
        "rebuild": {
            "steps": 3,
            "limit": 50000,
            "directions": "forward,backward",
            "min_language_count": 2,
            "require_alias": True,
        },
        "expected": {
            "entities": 12760,
            "predicates": 338,
            "edges": 17285,
            "active_edges": 7844,
            "dead_edges": 9441,
        },
    }
    (OUT_DIR / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def main():
    entities, predicates, triples, chaff_triples, blocked_ids, chaff_ids = build()
    assert len(entities) == 12760 + N_CHAFF
    assert len(predicates) == N_PREDICATES
    assert len(triples) == N_ACTIVE_EDGES + N_DEAD_EDGES
    dead = sum(1 for _, p, _ in triples if p in set(blocked_ids))
    assert dead == N_DEAD_EDGES, dead
    write_fixture(entities, predicates, triples, chaff_triples, blocked_ids, chaff_ids)
    print(f"wrote fixture to {OUT_DIR}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
