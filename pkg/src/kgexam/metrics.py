"""Win-rate / zero-sense-rate computation, grouped breakdowns, and the
colored graph-description / heatmap exports.

An edge counts as examined once it holds at least one tally.  Win rate is
the fraction of examined edges whose correct answers strictly outnumber the
incorrect ones (a tie is not a win); zero-sense rate is the fraction never
answered correctly.  Never-selected edges stay out of both denominators.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

from .graph import ParameterizedKG, posterior_mean

UNGROUPED = "ungrouped"


class UndefinedMetricError(Exception):
    """Raised when a metric is requested over zero examined edges."""


class UnknownDimensionError(Exception):
    pass


@dataclass(frozen=True)
class EdgeOutcome:
    edge_id: str
    n_correct: int
    n_incorrect: int

    @property
    def examined(self) -> bool:
        return self.n_correct + self.n_incorrect >= 1

    @property
    def win(self) -> bool:
        return self.n_correct > self.n_incorrect

    @property
    def zero_sense(self) -> bool:
        return self.examined and self.n_correct == 0


def outcomes_from_pkg(pkg: ParameterizedKG) -> list[EdgeOutcome]:
    return [EdgeOutcome(e.id, e.n_correct, e.n_incorrect) for e in pkg.edges.values()]


def outcomes_from_records(records: Iterable) -> list[EdgeOutcome]:
    """Rebuild per-edge tallies from exam records (the replay oracle)."""
    correct: dict[str, int] = {}
    incorrect: dict[str, int] = {}
    for rec in records:
        eid = rec.question.edge_id
        if rec.verdict.correct:
            correct[eid] = correct.get(eid, 0) + 1
            incorrect.setdefault(eid, 0)
        else:
            incorrect[eid] = incorrect.get(eid, 0) + 1
            correct.setdefault(eid, 0)
    return [EdgeOutcome(eid, correct[eid], incorrect[eid]) for eid in sorted(correct)]


def _examined(outcomes: Iterable[EdgeOutcome]) -> list[EdgeOutcome]:
    examined = [o for o in outcomes if o.examined]
    if not examined:
        raise UndefinedMetricError("no examined edges")
    return examined


def win_rate(outcomes: Iterable[EdgeOutcome]) -> float:
    examined = _examined(outcomes)
    return sum(1 for o in examined if o.win) / len(examined)


def zero_sense_rate(outcomes: Iterable[EdgeOutcome]) -> float:
    examined = _examined(outcomes)
    return sum(1 for o in examined if o.zero_sense) / len(examined)


# -- grouped reports ----------------------------------------------------


@dataclass(frozen=True)
class GroupRow:
    value: object
    win_rate: float | None
    zero_sense_rate: float | None
    examined: int
    total: int


@dataclass(frozen=True)
class GroupedReport:
    dimension: str
    rows: tuple[GroupRow, ...]


def _group_value(pkg: ParameterizedKG, edge, dimension: str, use_object_groups: bool):
    if dimension == "predicate":
        return edge.predicate
    entity_id = edge.object if use_object_groups else edge.subject
    entity = pkg.entities.get(entity_id)
    if entity is None:
        return None
    return entity.groups.get(dimension)


def group_metrics(
    pkg: ParameterizedKG,
    outcomes: Iterable[EdgeOutcome],
    dimension: str,
    use_object_groups: bool = False,
) -> GroupedReport:
    """Partition examined edges by the subject entity's group value (or by
    predicate) and compute both metrics per row.  Edges lacking the dimension
    land in an `ungrouped` row; rows come back sorted by group value."""
    if dimension != "predicate":
        known = any(dimension in ent.groups for ent in pkg.entities.values())
        if not known:
            raise UnknownDimensionError(f"no entity carries a group named {dimension!r}")

    by_value: dict[object, list[EdgeOutcome]] = {}
    totals: dict[object, int] = {}
    outcome_map = {o.edge_id: o for o in outcomes}
    for edge in pkg.edges.values():
        value = _group_value(pkg, edge, dimension, use_object_groups)
        key = UNGROUPED if value is None else value
        if edge.active:
            totals[key] = totals.get(key, 0) + 1
        out = outcome_map.get(edge.id)
        if out is not None and out.examined:
            by_value.setdefault(key, []).append(out)
            totals.setdefault(key, 0)

    rows = []
    keys = sorted((k for k in set(by_value) | set(totals) if k != UNGROUPED), key=str)
    if UNGROUPED in by_value or UNGROUPED in totals:
        keys.append(UNGROUPED)
    for key in keys:
        examined = by_value.get(key, [])
        rows.append(GroupRow(
            value=key,
            win_rate=win_rate(examined) if examined else None,
            zero_sense_rate=zero_sense_rate(examined) if examined else None,
            examined=len(examined),
            total=totals.get(key, 0),
        ))
    return GroupedReport(dimension=dimension, rows=tuple(rows))


def grouped_report_csv(report: GroupedReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([report.dimension, "win_rate", "zero_sense_rate", "examined_edges", "total_edges"])
    for row in report.rows:
        writer.writerow([
            row.value,
            "" if row.win_rate is None else f"{row.win_rate:.6f}",
            "" if row.zero_sense_rate is None else f"{row.zero_sense_rate:.6f}",
            row.examined,
            row.total,
        ])
    return buf.getvalue()


# -- graph-description export -------------------------------------------

# five equal-width posterior-mean buckets, low failure probability -> high
BUCKET_COLORS = ("#1a9641", "#a6d96a", "#ffffbf", "#fdae61", "#d7191c")
DEAD_COLOR = "#999999"


def color_bucket(mean: float) -> int:
    """0-based bucket index over [0,1) in steps of 0.2; 1.0 joins the top."""
    return min(4, int(mean * 5.0))


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def export_pkg_dot(pkg: ParameterizedKG) -> str:
    """Directed-graph description with edges colored by posterior mean
    failure probability; dead edges render gray and dashed.  Output ordering
    is by id, so identical graphs export identical bytes."""
    lines = ["digraph pkg {"]
    for eid in sorted(pkg.entities):
        ent = pkg.entities[eid]
        lines.append(f'  "{_dot_escape(eid)}" [label="{_dot_escape(ent.label)}"];')
    for eid in sorted(pkg.edges):
        edge = pkg.edges[eid]
        label = pkg.predicates[edge.predicate].label
        if edge.active:
            color = BUCKET_COLORS[color_bucket(posterior_mean(edge))]
            style = ""
        else:
            color = DEAD_COLOR
            style = ', style="dashed"'
        lines.append(
            f'  "{_dot_escape(edge.subject)}" -> "{_dot_escape(edge.object)}"'
            f' [label="{_dot_escape(label)}", color="{color}"{style}];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- heatmap ------------------------------------------------------------


@dataclass(frozen=True)
class HeatmapCell:
    metric: float
    examined: int
    weight: float  # examined count / group's examined total


@dataclass(frozen=True)
class HeatmapTable:
    dimension: str
    statistic: str
    groups: tuple[object, ...]
    predicates: tuple[str, ...]
    cells: dict  # (group, predicate) -> HeatmapCell


def heatmap_table(
    pkg: ParameterizedKG,
    outcomes: Iterable[EdgeOutcome],
    dimension: str,
    statistic: str = "zero_sense",
    use_object_groups: bool = False,
) -> HeatmapTable:
    """Group values x predicates grid.  Each non-empty cell carries the
    metric, the examined-edge count, and the count normalized by the group's
    examined total; predicates unexamined within a group stay empty rather
    than reading as a zero rate."""
    if statistic not in ("zero_sense", "win"):
        raise ValueError("statistic must be 'zero_sense' or 'win'")
    if dimension == "predicate":
        raise ValueError("heatmap group dimension cannot be 'predicate'")
    if not any(dimension in ent.groups for ent in pkg.entities.values()):
        raise UnknownDimensionError(f"no entity carries a group named {dimension!r}")

    outcome_map = {o.edge_id: o for o in outcomes}
    per_cell: dict[tuple[object, str], list[EdgeOutcome]] = {}
    group_examined: dict[object, int] = {}
    for edge in pkg.edges.values():
        out = outcome_map.get(edge.id)
        if out is None or not out.examined:
            continue
        value = _group_value(pkg, edge, dimension, use_object_groups)
        key = UNGROUPED if value is None else value
        per_cell.setdefault((key, edge.predicate), []).append(out)
        group_examined[key] = group_examined.get(key, 0) + 1

    groups = sorted({g for g, _ in per_cell}, key=str)
    predicates = sorted({p for _, p in per_cell})
    cells = {}
    for (g, p), outs in per_cell.items():
        metric = zero_sense_rate(outs) if statistic == "zero_sense" else win_rate(outs)
        cells[(g, p)] = HeatmapCell(metric=metric, examined=len(outs), weight=len(outs) / group_examined[g])
    return HeatmapTable(
        dimension=dimension,
        statistic=statistic,
        groups=tuple(groups),
        predicates=tuple(predicates),
        cells=cells,
    )


def heatmap_csv(table: HeatmapTable) -> str:
    """Wide CSV: rows are group values, columns are predicates, each
    non-empty cell packs `metric;examined;weight`."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([table.dimension, *table.predicates])
    for g in table.groups:
        row: list[str] = [str(g)]
        for p in table.predicates:
            cell = table.cells.get((g, p))
            row.append("" if cell is None else f"{cell.metric:.6f};{cell.examined};{cell.weight:.6f}")
        writer.writerow(row)
    return buf.getvalue()
