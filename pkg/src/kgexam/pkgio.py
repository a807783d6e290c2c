"""Line-delimited PKG file format.

One JSON record per line: a header carrying the format version, then
entities, predicates, and edges.  Records are written sorted by id with
sorted keys, so identical graphs serialize to identical bytes.  Beta
parameters are written as JSON numbers in shortest round-trip form, which
is exact (well past the 12 significant digits the format guarantees).
Files ending in ``.gz`` are transparently compressed.
"""

from __future__ import annotations

import gzip
import json
from pathlib import Path
from typing import IO, Iterator

from .graph import BetaParams, Edge, Entity, GraphConstructionError, ParameterizedKG, PredicateDef

FORMAT_NAME = "pkg"
FORMAT_VERSION = 1


class PkgFormatError(Exception):
    pass


def _open_text(path: Path, mode: str) -> IO[str]:
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def _dump(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def save_pkg(pkg: ParameterizedKG, path: str | Path) -> None:
    path = Path(path)
    with _open_text(path, "w") as fh:
        header = {"record": "header", "format": FORMAT_NAME, "version": FORMAT_VERSION}
        fh.write(_dump(header) + "\n")
        for eid in sorted(pkg.entities):
            ent = pkg.entities[eid]
            fh.write(_dump({
                "record": "entity",
                "id": ent.id,
                "label": ent.label,
                "aliases": list(ent.aliases),
                "description": ent.description,
                "groups": ent.groups,
            }) + "\n")
        for pid in sorted(pkg.predicates):
            pred = pkg.predicates[pid]
            fh.write(_dump({
                "record": "predicate",
                "id": pred.id,
                "label": pred.label,
                "description": pred.description,
            }) + "\n")
        for eid in sorted(pkg.edges):
            edge = pkg.edges[eid]
            fh.write(_dump({
                "record": "edge",
                "id": edge.id,
                "subject": edge.subject,
                "predicate": edge.predicate,
                "object": edge.object,
                "active": edge.active,
                "alpha": edge.params.alpha,
                "beta": edge.params.beta,
                "n_correct": edge.n_correct,
                "n_incorrect": edge.n_incorrect,
            }) + "\n")


def iter_records(path: str | Path) -> Iterator[dict]:
    path = Path(path)
    with _open_text(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise PkgFormatError(f"{path}:{lineno}: not a JSON record ({exc})") from None


def load_pkg(path: str | Path) -> ParameterizedKG:
    records = iter_records(path)
    try:
        header = next(records)
    except StopIteration:
        raise PkgFormatError(f"{path}: empty file") from None
    if header.get("record") != "header" or header.get("format") != FORMAT_NAME:
        raise PkgFormatError(f"{path}: missing PKG header record")
    if header.get("version") != FORMAT_VERSION:
        raise PkgFormatError(f"{path}: unsupported format version {header.get('version')!r}")

    pkg = ParameterizedKG()
    edge_records: list[dict] = []
    for rec in records:
        kind = rec.get("record")
        if kind == "entity":
            pkg.entities[rec["id"]] = Entity(
                id=rec["id"],
                label=rec["label"],
                aliases=tuple(rec.get("aliases", ())),
                description=rec.get("description", ""),
                groups=dict(rec.get("groups", {})),
            )
        elif kind == "predicate":
            pkg.predicates[rec["id"]] = PredicateDef(
                id=rec["id"], label=rec["label"], description=rec.get("description", "")
            )
        elif kind == "edge":
            edge_records.append(rec)
        else:
            raise PkgFormatError(f"{path}: unknown record type {kind!r}")

    for eid in pkg.entities:
        pkg._incident[eid] = set()
    for rec in edge_records:
        edge = Edge(
            id=rec["id"],
            subject=rec["subject"],
            predicate=rec["predicate"],
            object=rec["object"],
            active=bool(rec.get("active", True)),
            params=BetaParams(alpha=float(rec["alpha"]), beta=float(rec["beta"])),
            n_correct=int(rec.get("n_correct", 0)),
            n_incorrect=int(rec.get("n_incorrect", 0)),
        )
        try:
            pkg._add_edge(edge)
        except GraphConstructionError as exc:
            raise PkgFormatError(f"{path}: {exc}") from None
    return pkg


def load_triplet_records(path: str | Path) -> list[tuple[str, str, str]]:
    """Read (subject, predicate, object) rows from a PKG-format file.

    Used for supplemental answer files: only edge records are required,
    everything else is ignored.
    """
    triples = []
    for rec in iter_records(path):
        if rec.get("record") == "edge":
            triples.append((rec["subject"], rec["predicate"], rec["object"]))
    return triples
