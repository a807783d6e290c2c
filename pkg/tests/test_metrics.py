from __future__ import annotations

import pytest

from kgexam import exam, metrics
from kgexam.exam import ExamRecord, LogicalClock, LogWriter, RunConfig, Verdict
from kgexam.graph import Signal, edge_id_for
from kgexam.metrics import (
    EdgeOutcome,
    UndefinedMetricError,
    UnknownDimensionError,
    color_bucket,
    export_pkg_dot,
    group_metrics,
    heatmap_csv,
    heatmap_table,
    win_rate,
    zero_sense_rate,
)
from kgexam.questions import Question

from conftest import make_pkg


def O(eid, c, i):
    return EdgeOutcome(eid, c, i)


# -- global metrics ------------------------------------------------------


def test_win_rate_ties_do_not_win():
    outcomes = [O("a", 3, 1), O("b", 1, 1), O("c", 0, 2)]
    assert win_rate(outcomes) == pytest.approx(1 / 3)


def test_win_rate_all_winners():
    assert win_rate([O(str(i), 1, 0) for i in range(5)]) == 1.0


def test_zero_sense_rate_definition():
    assert zero_sense_rate([O("a", 0, 3), O("b", 2, 1)]) == 0.5


def test_zero_sense_rate_complement_case():
    assert zero_sense_rate([O("a", 1, 5), O("b", 2, 0)]) == 0.0


def test_metrics_undefined_without_examined_edges():
    with pytest.raises(UndefinedMetricError):
        win_rate([O("a", 0, 0)])
    with pytest.raises(UndefinedMetricError):
        zero_sense_rate([])


def test_tie_is_neither_win_nor_zero_sense():
    out = O("a", 2, 2)
    assert out.examined and not out.win and not out.zero_sense


def test_unexamined_edges_excluded_from_denominator():
    outcomes = [O("a", 1, 0), O("b", 0, 0), O("c", 0, 0)]
    assert win_rate(outcomes) == 1.0


# -- reference-value replay (recorded log fixture) -------------------------


def _reference_log(tmp_path):
    """A recorded EASY-mode log whose replay lands exactly on the published
    reference rates: win 84.79%, zero-sense 7.42% over 10,000 examined edges."""
    path = tmp_path / "reference_easy.jsonl"
    writer = LogWriter(path, "run-reference", RunConfig())
    clock = LogicalClock()

    def record(edge_num, correct, iteration):
        eid = f"E{edge_num:05d}"
        question = Question(
            edge_id=eid, kind="yesno", text=f"Is fact {edge_num} true?",
            generation_mode="template", expected_answer=True, presented_object=f"O{edge_num}",
        )
        verdict = Verdict(correct=correct, reason="matched" if correct else "mismatched")
        writer.exam(ExamRecord(
            iteration=iteration, question=question,
            raw_response="Yes." if correct else "No.",
            verdict=verdict, verification_mode="first-token", timestamp=clock(),
        ))

    n = 0
    for _ in range(8479):           # winners: 1 correct, 0 incorrect
        record(n, True, 1); n += 1
    for _ in range(779):            # ties: 1 correct, 1 incorrect (not zero-sense)
        record(n, True, 1); record(n, False, 2); n += 1
    for _ in range(742):            # zero-sense: never correct
        record(n, False, 1); n += 1
    writer.close()
    return path


def test_reference_rates_replay_identity(tmp_path):
    log = exam.read_log(_reference_log(tmp_path))
    outcomes = metrics.outcomes_from_records(log.records)
    assert len(outcomes) == 10_000
    assert win_rate(outcomes) == pytest.approx(0.8479, abs=1e-12)
    assert zero_sense_rate(outcomes) == pytest.approx(0.0742, abs=1e-12)


def test_replay_identity_against_tallies():
    pkg = make_pkg([(f"S{i}", "p", f"O{i}") for i in range(6)])
    signals = [
        ("S0", True), ("S1", False), ("S2", True), ("S0", True), ("S1", False),
    ]
    records = []
    for i, (s, ok) in enumerate(signals):
        eid = edge_id_for(s, "p", f"O{s[1:]}")
        pkg.apply_batch_update([Signal(eid, ok)], propagate=False)
        records.append(ExamRecord(
            iteration=i + 1,
            question=Question(edge_id=eid, kind="yesno", text="q", generation_mode="template",
                              expected_answer=True, presented_object="x"),
            raw_response="Yes." if ok else "No.",
            verdict=Verdict(ok, "matched" if ok else "mismatched"),
            verification_mode="first-token",
            timestamp="t",
        ))
    from_tallies = [o for o in metrics.outcomes_from_pkg(pkg) if o.examined]
    from_log = metrics.outcomes_from_records(records)
    assert win_rate(from_tallies) == win_rate(from_log)
    assert zero_sense_rate(from_tallies) == zero_sense_rate(from_log)


# -- grouping ---------------------------------------------------------------


def movie_pkg():
    pkg = make_pkg(
        [("M1", "p", "X1"), ("M2", "p", "X2"), ("M3", "p", "X3"), ("M4", "q", "X4")],
        groups={
            "M1": {"year": 2018}, "M2": {"year": 2018}, "M3": {"year": 2019},
            # M4 lacks the year group
        },
    )
    return pkg


def set_tally(pkg, subject, n_correct, n_incorrect):
    for edge in pkg.edges.values():
        if edge.subject == subject:
            edge.n_correct = n_correct
            edge.n_incorrect = n_incorrect


def test_group_metrics_partition_by_year():
    pkg = movie_pkg()
    set_tally(pkg, "M1", 0, 2)
    set_tally(pkg, "M2", 0, 1)
    set_tally(pkg, "M3", 2, 0)
    report = group_metrics(pkg, metrics.outcomes_from_pkg(pkg), "year")
    by_value = {row.value: row for row in report.rows}
    assert by_value[2018].zero_sense_rate == 1.0
    assert by_value[2019].zero_sense_rate == 0.0
    assert by_value[2018].examined == 2


def test_single_predicate_group_equals_global():
    pkg = make_pkg([("A", "p", "B"), ("C", "p", "D")])
    set_tally(pkg, "A", 3, 0)
    set_tally(pkg, "C", 0, 1)
    outcomes = metrics.outcomes_from_pkg(pkg)
    report = group_metrics(pkg, outcomes, "predicate")
    assert len(report.rows) == 1
    row = report.rows[0]
    assert row.win_rate == win_rate(outcomes)
    assert row.zero_sense_rate == zero_sense_rate(outcomes)


def test_edges_without_dimension_go_to_ungrouped():
    pkg = movie_pkg()
    set_tally(pkg, "M4", 1, 0)
    report = group_metrics(pkg, metrics.outcomes_from_pkg(pkg), "year")
    ungrouped = [r for r in report.rows if r.value == metrics.UNGROUPED]
    assert len(ungrouped) == 1
    assert ungrouped[0].examined == 1
    assert report.rows[-1].value == metrics.UNGROUPED  # sorted rows, ungrouped last


def test_grouped_examined_counts_sum_to_global():
    pkg = movie_pkg()
    set_tally(pkg, "M1", 1, 0)
    set_tally(pkg, "M4", 0, 2)
    outcomes = metrics.outcomes_from_pkg(pkg)
    report = group_metrics(pkg, outcomes, "year")
    assert sum(r.examined for r in report.rows) == sum(1 for o in outcomes if o.examined)


def test_unknown_dimension_raises():
    pkg = movie_pkg()
    with pytest.raises(UnknownDimensionError):
        group_metrics(pkg, metrics.outcomes_from_pkg(pkg), "color")


def test_object_side_grouping_flag():
    pkg = make_pkg(
        [("A", "p", "B")],
        groups={"B": {"country": "Austria"}},
    )
    set_tally(pkg, "A", 1, 0)
    outcomes = metrics.outcomes_from_pkg(pkg)
    report = group_metrics(pkg, outcomes, "country", use_object_groups=True)
    assert report.rows[0].value == "Austria"


# -- dot export ----------------------------------------------------------------


def test_dot_export_empty_graph():
    pkg = make_pkg([("A", "p", "B")])
    pkg.edges.clear()
    text = export_pkg_dot(pkg)
    assert text.startswith("digraph pkg {")
    assert text.rstrip().endswith("}")


def test_color_buckets():
    assert color_bucket(0.5) == 2   # middle of five buckets
    assert color_bucket(0.9) == 4   # highest-error bucket
    assert color_bucket(0.0) == 0
    assert color_bucket(1.0) == 4


def test_dot_edge_colors_and_dead_styling():
    pkg = make_pkg([("A", "p", "B"), ("B", "p", "C")], dead=[("B", "p", "C")])
    eid = edge_id_for("A", "p", "B")
    pkg.edges[eid].params.alpha = 9.0  # mean 0.9 -> highest-error bucket
    text = export_pkg_dot(pkg)
    assert metrics.BUCKET_COLORS[4] in text
    assert 'style="dashed"' in text
    assert metrics.DEAD_COLOR in text


def test_dot_export_deterministic():
    pkg = make_pkg([("A", "p", "B"), ("B", "p", "C")])
    assert export_pkg_dot(pkg) == export_pkg_dot(pkg.copy())


def test_dot_mid_bucket_for_prior():
    pkg = make_pkg([("A", "p", "B")])
    assert metrics.BUCKET_COLORS[2] in export_pkg_dot(pkg)


# -- heatmap --------------------------------------------------------------------


def test_heatmap_single_cell():
    pkg = make_pkg(
        [("A", "p", f"X{i}") for i in range(4)],
        groups={"A": {"topic": "t0"}},
    )
    outcomes = [
        O(edge_id_for("A", "p", "X0"), 0, 1),
        O(edge_id_for("A", "p", "X1"), 0, 2),
        O(edge_id_for("A", "p", "X2"), 1, 1),
        O(edge_id_for("A", "p", "X3"), 2, 0),
    ]
    table = heatmap_table(pkg, outcomes, "topic")
    cell = table.cells[("t0", "p")]
    assert cell.metric == 0.5     # 2 of 4 never answered correctly
    assert cell.examined == 4
    assert cell.weight == 1.0


def test_heatmap_empty_cell_is_marker_not_zero():
    pkg = make_pkg(
        [("A", "p", "X"), ("A", "q", "Y"), ("B", "p", "Z")],
        groups={"A": {"topic": "t0"}, "B": {"topic": "t1"}},
    )
    outcomes = [
        O(edge_id_for("A", "p", "X"), 1, 0),
        O(edge_id_for("A", "q", "Y"), 0, 1),
        O(edge_id_for("B", "p", "Z"), 1, 0),
    ]
    table = heatmap_table(pkg, outcomes, "topic")
    csv_text = heatmap_csv(table)
    lines = csv_text.splitlines()
    assert lines[0] == "topic,p,q"
    t1_row = [l for l in lines if l.startswith("t1,")][0]
    assert t1_row.endswith(",")  # q column empty for t1


def test_heatmap_row_weights_sum_to_one():
    pkg = make_pkg(
        [("A", "p", "X"), ("A", "q", "Y"), ("A", "q", "Z")],
        groups={"A": {"topic": "t0"}},
    )
    outcomes = [
        O(edge_id_for("A", "p", "X"), 1, 0),
        O(edge_id_for("A", "q", "Y"), 0, 1),
        O(edge_id_for("A", "q", "Z"), 1, 0),
    ]
    table = heatmap_table(pkg, outcomes, "topic")
    total = sum(cell.weight for (g, _), cell in table.cells.items() if g == "t0")
    assert total == pytest.approx(1.0)


def test_grouped_csv_shape():
    pkg = movie_pkg()
    set_tally(pkg, "M1", 1, 0)
    report = group_metrics(pkg, metrics.outcomes_from_pkg(pkg), "year")
    text = metrics.grouped_report_csv(report)
    lines = text.splitlines()
    assert lines[0] == "year,win_rate,zero_sense_rate,examined_edges,total_edges"
    assert any(l.startswith("2018,") for l in lines)
