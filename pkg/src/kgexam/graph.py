"""Parameterized knowledge graph: Beta-posterior edges, Thompson selection,
and one-degree signal propagation.

Every edge carries a Beta(alpha, beta) posterior over the probability that
the examinee fails on that fact (prior Beta(1,1)).  Selection draws one
theta per active edge and takes the top-n, so error-prone regions of the
graph are revisited more often.  A batch of correctness signals updates the
signaled edges directly and propagates each signal to all edges sharing an
endpoint with the signaled one.
"""

from __future__ import annotations

import copy
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

EDGE_ID_SEP = "|"


class GraphError(Exception):
    pass


class GraphConstructionError(GraphError):
    pass


class UnknownEdgeError(GraphError):
    pass


class NoExaminableEdges(GraphError):
    pass


class InvalidSignalError(GraphError):
    pass


@dataclass
class Entity:
    id: str
    label: str
    aliases: tuple[str, ...] = ()
    description: str = ""
    groups: dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.label:
            raise GraphConstructionError(f"entity {self.id!r} has an empty label")
        self.aliases = tuple(self.aliases)


@dataclass
class PredicateDef:
    id: str
    label: str
    description: str = ""

    def __post_init__(self) -> None:
        if not self.label:
            raise GraphConstructionError(f"predicate {self.id!r} has an empty label")


@dataclass
class BetaParams:
    """Beta(alpha, beta) posterior over an edge's failure probability."""

    alpha: float = 1.0
    beta: float = 1.0

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)


def posterior_mean(edge: "Edge") -> float:
    """Posterior mean failure probability, alpha / (alpha + beta)."""
    return edge.params.mean


@dataclass
class Edge:
    id: str
    subject: str
    predicate: str
    object: str
    active: bool = True
    params: BetaParams = field(default_factory=BetaParams)
    n_correct: int = 0
    n_incorrect: int = 0

    @property
    def examined(self) -> bool:
        return self.n_correct + self.n_incorrect >= 1


@dataclass(frozen=True)
class Signal:
    """Correctness outcome of one examination of one edge."""

    edge_id: str
    correct: bool


def edge_id_for(subject: str, predicate: str, obj: str) -> str:
    return EDGE_ID_SEP.join((subject, predicate, obj))


class ParameterizedKG:
    """Entity/predicate/edge store with incidence and out-degree indexes.

    apply_batch_update takes an internal lock and lands atomically; reads
    (selection, neighborhood queries, exports) see either the pre-batch or
    the post-batch state.
    """

    def __init__(self) -> None:
        self.entities: dict[str, Entity] = {}
        self.predicates: dict[str, PredicateDef] = {}
        self.edges: dict[str, Edge] = {}
        self._incident: dict[str, set[str]] = {}
        self._out_active: dict[str, int] = {}
        self._out_dead: dict[str, int] = {}
        self._active_ids: list[str] | None = None
        self._lock = threading.Lock()

    # -- construction -------------------------------------------------

    @classmethod
    def from_triplets(
        cls,
        triplets: Iterable[Sequence[object]],
        entities: Mapping[str, Entity],
        predicates: Mapping[str, PredicateDef],
    ) -> "ParameterizedKG":
        """Build a graph from (subject, predicate, object[, active[, meta]]) rows.

        Every edge starts at the Beta(1,1) prior with zero tallies.  A
        duplicate triplet or a reference to a missing entity/predicate is a
        construction error naming the offender.
        """
        pkg = cls()
        pkg.entities = dict(entities)
        pkg.predicates = dict(predicates)
        for eid in pkg.entities:
            pkg._incident[eid] = set()
        for row in triplets:
            s, p, o = str(row[0]), str(row[1]), str(row[2])
            active = bool(row[3]) if len(row) > 3 else True
            pkg._add_edge(Edge(id=edge_id_for(s, p, o), subject=s, predicate=p, object=o, active=active))
        return pkg

    def _add_edge(self, edge: Edge) -> None:
        if edge.id in self.edges:
            raise GraphConstructionError(f"duplicate edge id {edge.id!r}")
        for endpoint in (edge.subject, edge.object):
            if endpoint not in self.entities:
                raise GraphConstructionError(
                    f"edge {edge.id!r} references unknown entity {endpoint!r}"
                )
        if edge.predicate not in self.predicates:
            raise GraphConstructionError(
                f"edge {edge.id!r} references unknown predicate {edge.predicate!r}"
            )
        self.edges[edge.id] = edge
        self._incident.setdefault(edge.subject, set()).add(edge.id)
        self._incident.setdefault(edge.object, set()).add(edge.id)
        bucket = self._out_active if edge.active else self._out_dead
        bucket[edge.subject] = bucket.get(edge.subject, 0) + 1
        self._active_ids = None

    # -- queries ------------------------------------------------------

    def out_degree(self, entity_id: str, include_dead: bool = False) -> int:
        """Number of edges with this entity as subject (active only by default)."""
        n = self._out_active.get(entity_id, 0)
        if include_dead:
            n += self._out_dead.get(entity_id, 0)
        return n

    def incident_edges(self, entity_id: str) -> set[str]:
        return set(self._incident.get(entity_id, ()))

    def active_edge_ids(self) -> list[str]:
        """Active edge ids in lexicographic order (the canonical draw order)."""
        if self._active_ids is None:
            self._active_ids = sorted(e.id for e in self.edges.values() if e.active)
        return self._active_ids

    def counts(self) -> dict[str, int]:
        active = sum(1 for e in self.edges.values() if e.active)
        return {
            "entities": len(self.entities),
            "predicates": len(self.predicates),
            "edges": len(self.edges),
            "active_edges": active,
            "dead_edges": len(self.edges) - active,
        }

    def one_degree_neighbors(self, edge_id: str, include_dead: bool = False) -> set[str]:
        """All edges sharing an endpoint with `edge_id`, excluding itself.

        Dead edges stay in the adjacency structure but are filtered out
        unless `include_dead` is set.
        """
        try:
            edge = self.edges[edge_id]
        except KeyError:
            raise UnknownEdgeError(f"unknown edge id {edge_id!r}") from None
        found = (self._incident.get(edge.subject, set()) | self._incident.get(edge.object, set())) - {edge_id}
        if include_dead:
            return found
        return {eid for eid in found if self.edges[eid].active}

    # -- selection ----------------------------------------------------

    def select_batch(self, n: int, rng: np.random.Generator) -> list[str]:
        """Draw theta ~ Beta(alpha, beta) for every active edge and return the
        ids of the min(n, active) largest draws, descending.

        Draws happen in lexicographic edge-id order, so the result is fully
        determined by the rng state; theta ties break toward the smaller id.
        """
        if n < 1:
            raise ValueError("batch size must be >= 1")
        ids = self.active_edge_ids()
        if not ids:
            raise NoExaminableEdges("graph has no examinable edges")
        alphas = np.array([self.edges[i].params.alpha for i in ids])
        betas = np.array([self.edges[i].params.beta for i in ids])
        theta = rng.beta(alphas, betas)
        # ids are pre-sorted, so a stable sort on -theta breaks ties by id
        order = np.argsort(-theta, kind="stable")
        return [ids[i] for i in order[: min(n, len(ids))]]

    # -- updates ------------------------------------------------------

    def apply_batch_update(
        self,
        signals: Sequence[Signal],
        propagate: bool = True,
        propagate_to_dead: bool = False,
    ) -> "ParameterizedKG":
        """Apply one batch of signals.

        A signaled edge gains alpha += 1 on an incorrect answer, beta += 1 on
        a correct one, and its tallies move.  With propagation on, every
        signal also adds the same increment to each edge adjacent to the
        signaled one; neighbor counts come from this batch only.  The whole
        batch lands atomically.
        """
        seen: set[str] = set()
        for sig in signals:
            edge = self.edges.get(sig.edge_id)
            if edge is None:
                raise InvalidSignalError(f"signal for unknown edge {sig.edge_id!r}")
            if not edge.active:
                raise InvalidSignalError(f"signal for dead edge {sig.edge_id!r}")
            if sig.edge_id in seen:
                raise InvalidSignalError(f"multiple signals for edge {sig.edge_id!r} in one batch")
            seen.add(sig.edge_id)

        deltas: dict[str, list[float]] = {}

        def bump(eid: str, correct: bool) -> None:
            d = deltas.setdefault(eid, [0.0, 0.0])
            if correct:
                d[1] += 1.0
            else:
                d[0] += 1.0

        for sig in signals:
            bump(sig.edge_id, sig.correct)
            if propagate:
                for nb in self.one_degree_neighbors(sig.edge_id, include_dead=propagate_to_dead):
                    bump(nb, sig.correct)

        with self._lock:
            for eid, (da, db) in deltas.items():
                params = self.edges[eid].params
                params.alpha += da
                params.beta += db
            for sig in signals:
                edge = self.edges[sig.edge_id]
                if sig.correct:
                    edge.n_correct += 1
                else:
                    edge.n_incorrect += 1
        return self

    # -- integrity ----------------------------------------------------

    def rebuilt_indexes(self) -> tuple[dict[str, set[str]], dict[str, int], dict[str, int]]:
        """Recompute incidence and out-degree indexes from the edge list."""
        incident: dict[str, set[str]] = {eid: set() for eid in self.entities}
        out_active: dict[str, int] = {}
        out_dead: dict[str, int] = {}
        for edge in self.edges.values():
            incident.setdefault(edge.subject, set()).add(edge.id)
            incident.setdefault(edge.object, set()).add(edge.id)
            bucket = out_active if edge.active else out_dead
            bucket[edge.subject] = bucket.get(edge.subject, 0) + 1
        return incident, out_active, out_dead

    def check_indexes(self) -> bool:
        incident, out_active, out_dead = self.rebuilt_indexes()
        maintained = {k: v for k, v in self._incident.items() if v}
        rebuilt = {k: v for k, v in incident.items() if v}
        return maintained == rebuilt and out_active == self._out_active and out_dead == self._out_dead

    def copy(self) -> "ParameterizedKG":
        clone = ParameterizedKG()
        clone.entities = copy.deepcopy(self.entities)
        clone.predicates = copy.deepcopy(self.predicates)
        clone.edges = copy.deepcopy(self.edges)
        clone._incident = {k: set(v) for k, v in self._incident.items()}
        clone._out_active = dict(self._out_active)
        clone._out_dead = dict(self._out_dead)
        return clone
