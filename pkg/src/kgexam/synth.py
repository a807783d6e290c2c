"""Synthetic graph generation for simulated runs and convergence studies.

Builds a topic-clustered graph: each topic has a hub entity with many
outgoing edges (so the Wh out-degree gate gets exercised) plus a web of
spoke-to-spoke edges.  Every entity carries `topic` and `year` groups, and
each edge gets a simulated-examinee error probability anchored to its
topic's base rate, so grouped reports show real structure.
"""

from __future__ import annotations

import numpy as np

from .graph import Entity, ParameterizedKG, PredicateDef

PREDICATE_LABELS = (
    "related to", "part of", "located in", "created by", "used for",
    "member of", "borders", "succeeded by", "named after", "known for",
    "produced by", "derived from",
)


def synth_graph(
    n_edges: int = 1000,
    n_topics: int = 8,
    seed: int = 0,
    error_low: float = 0.05,
    error_high: float = 0.85,
) -> tuple[ParameterizedKG, dict[str, float]]:
    """Deterministic synthetic graph plus a per-edge error-probability map.

    Returns (pkg, error_probs); every edge is active and at the prior.
    """
    if n_edges < n_topics * 2:
        raise ValueError("need at least two edges per topic")
    rng = np.random.default_rng(seed)

    predicates = {
        f"P{i + 1:03d}": PredicateDef(id=f"P{i + 1:03d}", label=label, description=f"synthetic predicate {i + 1}")
        for i, label in enumerate(PREDICATE_LABELS)
    }
    pred_ids = sorted(predicates)

    entities: dict[str, Entity] = {}
    triplets: list[tuple[str, str, str]] = []
    error_probs: dict[str, float] = {}
    seen: set[tuple[str, str, str]] = set()

    per_topic = [n_edges // n_topics] * n_topics
    for i in range(n_edges - sum(per_topic)):
        per_topic[i] += 1

    if n_topics > 1:
        bases = np.linspace(error_low, error_high, n_topics)
    else:
        bases = np.array([(error_low + error_high) / 2.0])

    for t in range(n_topics):
        topic = f"topic-{t:02d}"
        hub_id = f"T{t:02d}H"
        entities[hub_id] = Entity(
            id=hub_id,
            label=f"Topic {t:02d} hub",
            aliases=(f"hub-{t:02d}",),
            description=f"hub entity of {topic}",
            groups={"topic": topic, "year": 2015 + t},
        )
        budget = per_topic[t]
        # at most ~1/3 hub spokes; hubs in big topics exceed the Wh gate
        n_spokes = max(2, min(budget // 3 + 2, budget))
        spokes = []
        for k in range(max(n_spokes, 3)):
            sid = f"T{t:02d}E{k:03d}"
            entities[sid] = Entity(
                id=sid,
                label=f"Topic {t:02d} item {k:03d}",
                aliases=(f"t{t:02d}-item-{k:03d}",),
                description="",
                groups={"topic": topic, "year": 2015 + (k % 8)},
            )
            spokes.append(sid)

        made = 0
        for k in range(min(n_spokes, budget)):
            pred = pred_ids[int(rng.integers(len(pred_ids)))]
            row = (hub_id, pred, spokes[k % len(spokes)])
            if row not in seen:
                seen.add(row)
                triplets.append(row)
                made += 1
        attempts = 0
        while made < budget and attempts < budget * 50:
            attempts += 1
            a, b = rng.integers(len(spokes)), rng.integers(len(spokes))
            if a == b:
                continue
            pred = pred_ids[int(rng.integers(len(pred_ids)))]
            row = (spokes[int(a)], pred, spokes[int(b)])
            if row in seen:
                continue
            seen.add(row)
            triplets.append(row)
            made += 1
        if made < budget:
            raise RuntimeError(f"could not place {budget} unique edges in topic {t}")

    pkg = ParameterizedKG.from_triplets(triplets, entities, predicates)

    topic_base = {f"topic-{t:02d}": float(bases[t]) for t in range(n_topics)}
    for edge in pkg.edges.values():
        topic = entities[edge.subject].groups["topic"]
        jitter = float(rng.uniform(-0.05, 0.05))
        error_probs[edge.id] = float(np.clip(topic_base[topic] + jitter, 0.0, 1.0))
    return pkg, error_probs
