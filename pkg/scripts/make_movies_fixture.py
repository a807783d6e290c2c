#!/usr/bin/env python3
"""Generate the small movie fixture PKG used by the report examples:
36 films released 2016-2023 (year groups on the subject entities), a
handful of predicates, and shared people/genres so negative pools are
non-trivial.  Deterministic; writes fixtures/movies.pkgl."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from kgexam import pkgio
from kgexam.graph import Entity, ParameterizedKG, PredicateDef

OUT = Path(__file__).resolve().parent.parent / "fixtures" / "movies.pkgl"

GENRES = ["drama film", "comedy film", "science fiction film", "thriller film"]
PEOPLE = [f"Director {chr(65 + i)}" for i in range(8)] + [f"Actor {chr(65 + i)}" for i in range(10)]


def main():
    rng = np.random.default_rng(424242)
    entities: dict[str, Entity] = {}
    predicates = {
        "P57": PredicateDef(id="P57", label="director", description="film director"),
        "P161": PredicateDef(id="P161", label="cast member", description="actor in the film"),
        "P136": PredicateDef(id="P136", label="genre", description="artistic genre"),
        "P272": PredicateDef(id="P272", label="production company", description="studio"),
    }
    for i, name in enumerate(PEOPLE):
        eid = f"H{i:02d}"
        entities[eid] = Entity(id=eid, label=name, aliases=(name.replace(" ", "-").lower(),))
    for i, name in enumerate(GENRES):
        eid = f"G{i:02d}"
        entities[eid] = Entity(id=eid, label=name, aliases=(name.split()[0],))
    for i in range(3):
        eid = f"C{i:02d}"
        entities[eid] = Entity(id=eid, label=f"Studio {i}", aliases=(f"studio-{i}",))

    triplets = []
    for i in range(36):
        year = 2016 + i % 8
        mid = f"M{i:02d}"
        entities[mid] = Entity(
            id=mid,
            label=f"Film number {i:02d}",
            aliases=(f"film-{i:02d}",),
            description=f"a {year} film",
            groups={"year": year},
        )
        director = f"H{int(rng.integers(8)):02d}"
        triplets.append((mid, "P57", director))
        for actor in rng.choice(np.arange(8, 18), size=2, replace=False):
            triplets.append((mid, "P161", f"H{int(actor):02d}"))
        triplets.append((mid, "P136", f"G{int(rng.integers(len(GENRES))):02d}"))
        if i % 3 == 0:
            triplets.append((mid, "P272", f"C{int(rng.integers(3)):02d}"))

    pkg = ParameterizedKG.from_triplets(triplets, entities, predicates)
    pkgio.save_pkg(pkg, OUT)
    print(f"wrote {OUT}: {pkg.counts()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
