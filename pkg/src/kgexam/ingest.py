"""Topic-KG construction: seeded forward/backward random walks against a
SPARQL endpoint (or a frozen fixture directory), entity filtering, and
predicate-blocklist edge classification.

The walk queries keep the endpoint-side randomized ordering so repeated
calls sample different edges; a step's frontier is the set of entities newly
discovered by the previous step.  Filters drop entities that are mentioned
in too few languages, carry no alias, or fall below a mention-frequency
floor (by default the entity's incident-edge count inside the crawl stands
in for corpus frequency).
"""

from __future__ import annotations

import gzip
import json
import logging
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import requests

from . import prompts
from .graph import Entity, ParameterizedKG, PredicateDef

logger = logging.getLogger(__name__)

FORWARD = "forward"
BACKWARD = "backward"

_BINDING_FIELDS = (
    "subject", "subjectLabel", "subjectDesc",
    "predicate", "predicateLabel", "predicateDesc",
    "object", "objectLabel", "objectDesc",
)


class IngestError(Exception):
    pass


class EndpointUnreachable(IngestError):
    pass


class ResponseParseError(IngestError):
    pass


class EmptyGraphError(IngestError):
    pass


@dataclass
class WalkConfig:
    seeds: list[str]
    steps: int = 3
    limit: int = 10000
    directions: tuple[str, ...] = (FORWARD, BACKWARD)

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.limit < 1:
            raise ValueError("limit must be >= 1")
        for d in self.directions:
            if d not in (FORWARD, BACKWARD):
                raise ValueError(f"unknown walk direction {d!r}")


@dataclass
class FilterConfig:
    min_language_count: int = 0
    require_alias: bool = True
    min_mention_frequency: int = 0
    predicate_blocklist: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.min_language_count < 0 or self.min_mention_frequency < 0:
            raise ValueError("filter thresholds must be >= 0")


@dataclass(frozen=True)
class RawBinding:
    subject: str
    subject_label: str
    subject_desc: str
    predicate: str
    predicate_label: str
    predicate_desc: str
    object: str
    object_label: str
    object_desc: str


@dataclass
class StoreEntity:
    label: str
    description: str = ""
    aliases: list[str] = field(default_factory=list)
    groups: dict[str, object] = field(default_factory=dict)


class RawTripletStore:
    """Accumulated walk output: entities, predicates, unique triplets, and
    (after classification) per-triplet active flags."""

    def __init__(self, seeds: Sequence[str] = ()):
        self.seeds = list(seeds)
        self.entities: dict[str, StoreEntity] = {}
        self.predicates: dict[str, tuple[str, str]] = {}
        self.triplets: dict[tuple[str, str, str], bool] = {}

    def add_binding(self, b: RawBinding) -> None:
        self.entities.setdefault(b.subject, StoreEntity(label=b.subject_label, description=b.subject_desc))
        self.entities.setdefault(b.object, StoreEntity(label=b.object_label, description=b.object_desc))
        self.predicates.setdefault(b.predicate, (b.predicate_label, b.predicate_desc))
        self.triplets.setdefault((b.subject, b.predicate, b.object), True)

    def triplet_count(self) -> int:
        return len(self.triplets)

    def active_dead_counts(self) -> tuple[int, int]:
        active = sum(1 for flag in self.triplets.values() if flag)
        return active, len(self.triplets) - active

    def incident_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for s, _, o in self.triplets:
            counts[s] = counts.get(s, 0) + 1
            counts[o] = counts.get(o, 0) + 1
        return counts

    def apply_aliases(self, aliases: Mapping[str, Sequence[str]]) -> None:
        for eid, names in aliases.items():
            if eid in self.entities:
                self.entities[eid].aliases = list(names)

    def apply_groups(self, groups: Mapping[str, Mapping[str, object]]) -> None:
        for eid, g in groups.items():
            if eid in self.entities:
                self.entities[eid].groups = dict(g)

    def copy(self) -> "RawTripletStore":
        clone = RawTripletStore(self.seeds)
        clone.entities = {
            k: StoreEntity(v.label, v.description, list(v.aliases), dict(v.groups))
            for k, v in self.entities.items()
        }
        clone.predicates = dict(self.predicates)
        clone.triplets = dict(self.triplets)
        return clone

    def to_parameterized(self) -> ParameterizedKG:
        entities = {
            eid: Entity(id=eid, label=se.label, aliases=tuple(se.aliases),
                        description=se.description, groups=dict(se.groups))
            for eid, se in self.entities.items()
        }
        predicates = {
            pid: PredicateDef(id=pid, label=label, description=desc)
            for pid, (label, desc) in self.predicates.items()
        }
        rows = [(s, p, o, active) for (s, p, o), active in sorted(self.triplets.items())]
        return ParameterizedKG.from_triplets(rows, entities, predicates)


# -- endpoints ----------------------------------------------------------


def parse_sparql_bindings(payload: dict) -> tuple[list[RawBinding], int]:
    """Extract complete walk bindings from a SPARQL JSON result; rows missing
    any projected field are rejected and counted."""
    try:
        rows = payload["results"]["bindings"]
    except (KeyError, TypeError):
        raise ResponseParseError(
            f"not a SPARQL result payload: {json.dumps(payload)[:200]}"
        ) from None
    bindings: list[RawBinding] = []
    skipped = 0
    for row in rows:
        values = []
        ok = True
        for name in _BINDING_FIELDS:
            cell = row.get(name)
            if not cell or "value" not in cell or cell["value"] == "":
                ok = False
                break
            values.append(str(cell["value"]))
        if not ok:
            skipped += 1
            continue
        bindings.append(RawBinding(*values))
    return bindings, skipped


class SparqlHttpEndpoint:
    """SPARQL-over-HTTP walk queries with exponential-backoff retries."""

    def __init__(
        self,
        url: str,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff_base: float = 1.0,
        value_format: str = "wd:{id}",
        session: requests.Session | None = None,
    ):
        self.url = url
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.value_format = value_format
        self.skipped_rows = 0
        self._session = session or requests.Session()

    def _query_text(self, direction: str, values: Sequence[str], limit: int) -> str:
        template = prompts.load_query("forward_walk" if direction == FORWARD else "backward_walk")
        rendered = "\n    ".join(self.value_format.format(id=v) for v in values)
        return template.format(values=rendered, limit=limit)

    def run_walk_query(self, direction: str, values: Sequence[str], limit: int) -> list[RawBinding]:
        query = self._query_text(direction, values, limit)
        last_error = ""
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(min(30.0, self.backoff_base * (2.0 ** (attempt - 1))))
            try:
                resp = self._session.post(
                    self.url,
                    data={"query": query},
                    headers={"Accept": "application/sparql-results+json"},
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_error = str(exc)
                continue
            if resp.status_code in (429, 500, 502, 503, 504):
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise EndpointUnreachable(f"HTTP {resp.status_code} from {self.url}: {resp.text[:200]}")
            try:
                payload = resp.json()
            except ValueError:
                raise ResponseParseError(f"non-JSON response: {resp.text[:200]}") from None
            bindings, skipped = parse_sparql_bindings(payload)
            self.skipped_rows += skipped
            return bindings
        raise EndpointUnreachable(f"{self.url} unreachable after {self.max_retries + 1} attempts: {last_error}")


class FixtureSparqlEndpoint:
    """Replays walk queries against a frozen dump directory.

    The dump holds one JSON binding per line (`dump.jsonl` or
    `dump.jsonl.gz`) using the walk query's projected field names.  Results
    come back in a seeded shuffled order, mirroring the randomized ordering
    of the live query; with a limit at least as large as the match count the
    returned set is complete and rebuilds are exact.
    """

    def __init__(self, directory: str | Path, shuffle_seed: int = 0):
        self.directory = Path(directory)
        self.skipped_rows = 0
        self._shuffle_seed = shuffle_seed
        self._calls = 0
        self._by_subject: dict[str, list[RawBinding]] = {}
        self._by_object: dict[str, list[RawBinding]] = {}
        self._load()

    def _dump_path(self) -> Path:
        for name in ("dump.jsonl", "dump.jsonl.gz"):
            path = self.directory / name
            if path.exists():
                return path
        raise IngestError(f"no dump.jsonl[.gz] in {self.directory}")

    def _load(self) -> None:
        path = self._dump_path()
        opener = gzip.open if path.suffix == ".gz" else open
        with opener(path, "rt", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                values = [row.get(name, "") for name in _BINDING_FIELDS]
                if not all(values):
                    self.skipped_rows += 1
                    continue
                b = RawBinding(*[str(v) for v in values])
                self._by_subject.setdefault(b.subject, []).append(b)
                self._by_object.setdefault(b.object, []).append(b)

    def run_walk_query(self, direction: str, values: Sequence[str], limit: int) -> list[RawBinding]:
        index = self._by_subject if direction == FORWARD else self._by_object
        matches: list[RawBinding] = []
        seen: set[tuple[str, str, str]] = set()
        for v in values:
            for b in index.get(v, ()):
                key = (b.subject, b.predicate, b.object)
                if key not in seen:
                    seen.add(key)
                    matches.append(b)
        self._calls += 1
        random.Random(self._shuffle_seed * 1_000_003 + self._calls).shuffle(matches)
        return matches[:limit]


def execute_walk_step(endpoint, frontier: Sequence[str], direction: str, limit: int) -> list[RawBinding]:
    """One walk query with VALUES filled from the frontier."""
    if not frontier:
        raise ValueError("walk frontier must be non-empty")
    if direction not in (FORWARD, BACKWARD):
        raise ValueError(f"unknown walk direction {direction!r}")
    return endpoint.run_walk_query(direction, sorted(frontier), limit)


def build_graph(endpoint, walk: WalkConfig) -> RawTripletStore:
    """Alternate forward/backward walk steps from the seeds, accumulating
    unique triplets; each next frontier is the set of newly discovered
    entities."""
    store = RawTripletStore(seeds=walk.seeds)
    seen: set[str] = set(walk.seeds)
    frontier: set[str] = set(walk.seeds)
    for step in range(1, walk.steps + 1):
        if not frontier:
            break
        discovered: set[str] = set()
        for direction in walk.directions:
            for b in execute_walk_step(endpoint, sorted(frontier), direction, walk.limit):
                store.add_binding(b)
                for eid in (b.subject, b.object):
                    if eid not in seen:
                        seen.add(eid)
                        discovered.add(eid)
        logger.info("walk step %d: frontier=%d discovered=%d triplets=%d",
                    step, len(frontier), len(discovered), store.triplet_count())
        frontier = discovered
    if store.triplet_count() == 0:
        raise EmptyGraphError("walk produced no triplets")
    return store


def apply_entity_filters(
    store: RawTripletStore,
    filters: FilterConfig,
    language_counts: Mapping[str, int] | None = None,
    mention_frequency: Mapping[str, int] | None = None,
) -> RawTripletStore:
    """Return a copy of the store with entities failing any enabled threshold
    removed along with their incident triplets; entities left with no
    triplets are pruned too."""
    language_counts = language_counts or {}
    frequency = mention_frequency if mention_frequency is not None else store.incident_counts()

    def keep(eid: str) -> bool:
        ent = store.entities[eid]
        if filters.require_alias and not ent.aliases:
            return False
        if filters.min_language_count > 0 and language_counts.get(eid, 0) < filters.min_language_count:
            return False
        if filters.min_mention_frequency > 0 and frequency.get(eid, 0) < filters.min_mention_frequency:
            return False
        return True

    kept = {eid for eid in store.entities if keep(eid)}
    out = RawTripletStore(seeds=[s for s in store.seeds if s in kept])
    out.triplets = {
        (s, p, o): flag for (s, p, o), flag in store.triplets.items() if s in kept and o in kept
    }
    referenced = {s for s, _, _ in out.triplets} | {o for _, _, o in out.triplets}
    out.entities = {
        eid: StoreEntity(se.label, se.description, list(se.aliases), dict(se.groups))
        for eid, se in store.entities.items()
        if eid in referenced
    }
    used_predicates = {p for _, p, _ in out.triplets}
    out.predicates = {pid: v for pid, v in store.predicates.items() if pid in used_predicates}
    return out


def classify_edges(store: RawTripletStore, blocklist: Iterable[str]) -> tuple[int, int]:
    """Mark triplets with blocklisted predicates dead, everything else
    active; returns (active, dead) counts."""
    blocked = set(blocklist)
    for key in store.triplets:
        store.triplets[key] = key[1] not in blocked
    active, dead = store.active_dead_counts()
    logger.info("classified edges: %d active, %d dead", active, dead)
    return active, dead


def entity_depths(store: RawTripletStore, seeds: Sequence[str]) -> dict[str, int]:
    """Undirected BFS hop count from the seed set (walk-depth soundness check)."""
    adjacency: dict[str, set[str]] = {}
    for s, _, o in store.triplets:
        adjacency.setdefault(s, set()).add(o)
        adjacency.setdefault(o, set()).add(s)
    depths = {s: 0 for s in seeds if s in store.entities}
    queue = list(depths)
    while queue:
        nxt: list[str] = []
        for node in queue:
            for nb in adjacency.get(node, ()):
                if nb not in depths:
                    depths[nb] = depths[node] + 1
                    nxt.append(nb)
        queue = nxt
    return depths


# -- sidecar files -------------------------------------------------------


def load_json_map(path: str | Path) -> dict:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt", encoding="utf-8") as fh:
        return json.load(fh)


def load_id_list(path: str | Path) -> list[str]:
    """Plain-text ids, one per line; '#' starts a comment."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        entry = line.split("#", 1)[0].strip()
        if entry:
            out.append(entry)
    return out
