"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with `pytest -s tests/test_acceptance.py` to see them).

Statistical criteria run against frozen seeds, so they are deterministic;
the tolerances they assert are the release thresholds, not the typical
margins (which are much wider).
"""

from __future__ import annotations

import json
import subprocess
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from kgexam import exam, ingest, llm, metrics, questions, synth
from kgexam.exam import LogicalClock, RunConfig, run_evaluation, verify_wh, verify_yes_no
from kgexam.graph import BetaParams, Entity, ParameterizedKG, PredicateDef, Signal, edge_id_for
from kgexam.questions import WhKind, YesNoKind

from conftest import make_pkg
from test_cli import validate_dot

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
COUNTRY = FIXTURES / "country"


@contextmanager
def criterion(number: int, description: str):
    try:
        yield
    except BaseException:
        print(f"\n[criterion {number:02d}] FAIL - {description}")
        raise
    print(f"\n[criterion {number:02d}] PASS - {description}")


def isolated_graph(n: int) -> ParameterizedKG:
    triplets = [(f"S{i:05d}", "p", f"O{i:05d}") for i in range(n)]
    entity_ids = sorted({t[0] for t in triplets} | {t[2] for t in triplets})
    entities = {e: Entity(id=e, label=f"{e} label") for e in entity_ids}
    return ParameterizedKG.from_triplets(
        triplets, entities, {"p": PredicateDef(id="p", label="relation")}
    )


# -- 1: update-equation exactness ------------------------------------------


def test_criterion_01_update_equations_exact():
    with criterion(1, "update equations exact on the clique hand-trace and core examples"):
        start = time.perf_counter()

        # 3-edge clique, all three fail in one batch: each edge gains its own
        # +1 and +1 from each of its two failing neighbors
        clique = make_pkg([("A", "p", "B"), ("B", "p", "C"), ("C", "p", "A")])
        clique.apply_batch_update([Signal(eid, correct=False) for eid in clique.active_edge_ids()])
        for edge in clique.edges.values():
            assert edge.params.alpha == 4.0 and edge.params.beta == 1.0

        # prior and posterior-mean examples
        empty = ParameterizedKG.from_triplets([], {}, {})
        assert empty.counts()["edges"] == 0 and empty.counts()["entities"] == 0
        single = make_pkg([("A", "p", "B")])
        assert single.edges[edge_id_for("A", "p", "B")].params.mean == 0.5
        assert BetaParams(4, 2).mean == pytest.approx(2 / 3, abs=1e-9)
        assert BetaParams(1, 101).mean == pytest.approx(0.0098, abs=1e-4)

        # direct hand application: own incorrect + 2 incorrect and 1 correct neighbor
        pkg = make_pkg([("A", "p", "B"), ("A", "p", "C"), ("A", "p", "D"), ("B", "p", "E")])
        pkg.apply_batch_update([
            Signal(edge_id_for("A", "p", "B"), False),
            Signal(edge_id_for("A", "p", "C"), False),
            Signal(edge_id_for("A", "p", "D"), False),
            Signal(edge_id_for("B", "p", "E"), True),
        ])
        target = pkg.edges[edge_id_for("A", "p", "B")]
        assert (target.params.alpha, target.params.beta) == (4.0, 2.0)

        # propagation-only and no-op cases
        star = make_pkg([("C", "p", "X1"), ("C", "p", "X2"), ("C", "p", "X3"), ("Z", "p", "W")])
        star.apply_batch_update([
            Signal(edge_id_for("C", "p", "X2"), True),
            Signal(edge_id_for("C", "p", "X3"), True),
        ])
        lonely = star.edges[edge_id_for("Z", "p", "W")]
        assert (lonely.params.alpha, lonely.params.beta) == (1.0, 1.0)
        touched = star.edges[edge_id_for("C", "p", "X1")]
        assert (touched.params.alpha, touched.params.beta) == (1.0, 3.0)
        assert (touched.n_correct, touched.n_incorrect) == (0, 0)

        # neighborhood examples
        chain = make_pkg([("A", "p", "B"), ("B", "p", "C"), ("C", "p", "D")])
        assert chain.one_degree_neighbors(edge_id_for("B", "p", "C")) == {
            edge_id_for("A", "p", "B"), edge_id_for("C", "p", "D"),
        }

        assert time.perf_counter() - start < 1.0


# -- 2: posterior convergence, propagation off -------------------------------


def test_criterion_02_posterior_convergence():
    with criterion(2, "posterior means track true error rates within 0.10 for >= 90% of edges"):
        start = time.perf_counter()
        seed = 0
        pkg = isolated_graph(200)
        ids = pkg.active_edge_ids()
        rng_p = np.random.default_rng(seed)
        true_p = {eid: float(rng_p.uniform(0, 1)) for eid in ids}
        examinee = llm.SimulatedExaminee(error_prob=true_p, seed=seed + 1)
        answers = questions.build_answer_sets(pkg)
        rng_sel = np.random.default_rng(seed + 2)
        rng_qg = np.random.default_rng(seed + 3)

        counts = {eid: 0 for eid in ids}
        while min(counts.values()) < 50:
            batch = pkg.select_batch(len(ids), rng_sel)  # full batch examines every edge
            signals = []
            for eid in batch:
                edge = pkg.edges[eid]
                kind = questions.choose_question_kind(
                    questions.EASY, pkg.out_degree(edge.subject), rng_qg
                )
                q = questions.generate_question(pkg, answers, edge, kind, rng_qg)
                verdict = verify_yes_no(examinee.answer(q), q.expected_answer)
                signals.append(Signal(eid, verdict.correct))
                counts[eid] += 1
            pkg.apply_batch_update(signals, propagate=False)

        assert min(counts.values()) >= 50
        within = [abs(pkg.edges[e].params.mean - true_p[e]) <= 0.10 for e in ids]
        fraction = sum(within) / len(within)
        assert fraction >= 0.90, fraction
        assert time.perf_counter() - start < 60.0


# -- 3: adaptive focusing, propagation on --------------------------------------


def test_criterion_03_adaptive_focusing():
    with criterion(3, "high-error cluster drives >= 2x the selections of the low-error one"):
        triplets = []
        entities = {}
        for c in range(2):
            hub = f"HUB{c}"
            entities[hub] = Entity(id=hub, label=f"hub {c}")
            for i in range(50):
                spoke = f"C{c}S{i:02d}"
                entities[spoke] = Entity(id=spoke, label=f"spoke {c}-{i:02d}")
                triplets.append((hub, "p", spoke))
        pkg = ParameterizedKG.from_triplets(
            triplets, entities, {"p": PredicateDef(id="p", label="relation")}
        )
        probs = {eid: (0.9 if eid.startswith("HUB0") else 0.1) for eid in pkg.edges}
        examinee = llm.SimulatedExaminee(error_prob=probs, seed=18)
        answers = questions.build_answer_sets(pkg)
        rng_sel = np.random.default_rng(17)
        rng_qg = np.random.default_rng(19)

        high = low = 0
        for _ in range(30):
            batch = pkg.select_batch(16, rng_sel)
            signals = []
            for eid in batch:
                if eid.startswith("HUB0"):
                    high += 1
                else:
                    low += 1
                edge = pkg.edges[eid]
                kind = questions.choose_question_kind(
                    questions.EASY, pkg.out_degree(edge.subject), rng_qg
                )
                q = questions.generate_question(pkg, answers, edge, kind, rng_qg)
                verdict = verify_yes_no(examinee.answer(q), q.expected_answer)
                signals.append(Signal(eid, verdict.correct))
            pkg.apply_batch_update(signals, propagate=True)

        assert high + low == 480
        assert high >= 2 * low, (high, low)


# -- 4: question-kind distribution -----------------------------------------------


def test_criterion_04_question_kind_distribution():
    with criterion(4, "HARD kind split and Yes/No polarity are fair; the out-degree gate is absolute"):
        rng = np.random.default_rng(404)
        kinds = [questions.choose_question_kind(questions.HARD, 3, rng) for _ in range(10_000)]
        wh_fraction = sum(isinstance(k, WhKind) for k in kinds) / len(kinds)
        assert 0.48 <= wh_fraction <= 0.52, wh_fraction

        yes_kinds = [questions.choose_question_kind(questions.EASY, 3, rng) for _ in range(10_000)]
        yes_fraction = sum(k.expected_answer for k in yes_kinds) / len(yes_kinds)
        assert 0.48 <= yes_fraction <= 0.52, yes_fraction

        gated = [questions.choose_question_kind(questions.HARD, 10, rng) for _ in range(10_000)]
        assert all(isinstance(k, YesNoKind) for k in gated)


# -- 5: negative soundness ---------------------------------------------------------


def test_criterion_05_negative_soundness():
    with criterion(5, "10,000 sampled negatives never collide with a truth set"):
        from kgexam import pkgio

        pkg = pkgio.load_pkg(FIXTURES / "movies.pkgl")
        answers = questions.build_answer_sets(pkg)
        rng = np.random.default_rng(505)
        edges = [pkg.edges[eid] for eid in pkg.active_edge_ids()]
        for i in range(10_000):
            edge = edges[i % len(edges)]
            negative = questions.sample_negative(edge, answers, rng)
            assert negative not in answers.truth_for(edge.subject, edge.predicate)
            assert negative in answers.candidates_for(edge.predicate)


# -- 6: verification fidelity --------------------------------------------------------


class DemonstrationJudge:
    """Scripted judge fixture reproducing the documented demonstration
    gradings; anything unknown is graded no."""

    KNOWN_CORRECT = "the ixcatec language uses the latin alphabet for writing."

    def judge(self, question_text, gold_labels, response):
        return "yes" if response.strip().lower() == self.KNOWN_CORRECT else "no"


def test_criterion_06_verification_fidelity():
    with criterion(6, "demonstration transcripts verify to their documented verdicts"):
        judge = DemonstrationJudge()

        ixcatec = questions.Question(
            edge_id="e-ixcatec", kind="wh",
            text="What writing system does the Ixcatec language use?",
            generation_mode="llm",
            gold_objects=("Q-latin",),
            gold_labels=("latin script", "latn", "roman script"),
        )
        verdict = verify_wh(
            ixcatec, "the ixcatec language uses the latin alphabet for writing.", judge
        )
        assert verdict.correct and verdict.reason == "judge-yes"

        railway = questions.Question(
            edge_id="e-rail", kind="wh",
            text="On which side does railway traffic run in the philippines?",
            generation_mode="llm",
            gold_objects=("Q-left",),
            gold_labels=("left", "left side", "left-hand side"),
        )
        verdict = verify_wh(
            railway, "Railway traffic in the philippines runs on the right-hand side.", judge
        )
        assert not verdict.correct and verdict.reason == "judge-no"

        # self-contradicting reply to a question whose gold answer is Yes:
        # the opening word decides
        verdict = verify_yes_no(
            "No, the Australian dollar (AUD) is the official currency of Nauru, "
            "a small island nation in the Pacific Ocean.",
            expected=True,
        )
        assert not verdict.correct and verdict.reason == "mismatched"

        # refusal phrasing is an incorrect answer with the refusal reason
        verdict = verify_yes_no(
            "I am sorry, but I couldn't find any information on that.", expected=False
        )
        assert not verdict.correct and verdict.reason == "refusal"


# -- 7: replay identity and the random-guess baseline ----------------------------------


def test_criterion_07_replay_identity_and_coin_flip_baseline():
    with criterion(7, "log replay reproduces tally metrics; coin-flip examinee wins ~50% on EASY"):
        pkg = isolated_graph(10_000)
        config = RunConfig(iterations=45, batch_size=64, mode=questions.EASY, seed=11,
                           convergence_epsilon=1e-12)
        examinee = llm.SimulatedExaminee(default_error_prob=0.5, seed=12)
        result = run_evaluation(pkg, config, examinee, judge=llm.SimulatedJudge(),
                                clock=LogicalClock())

        outcomes = metrics.outcomes_from_pkg(pkg)
        examined = sum(1 for o in outcomes if o.examined)
        assert examined >= 2000, examined

        replayed = metrics.outcomes_from_records(result.records)
        assert metrics.win_rate(replayed) == metrics.win_rate(outcomes)
        assert metrics.zero_sense_rate(replayed) == metrics.zero_sense_rate(outcomes)

        win = metrics.win_rate(outcomes)
        assert abs(win - 0.50) <= 0.03, win


# -- 8: byte-identical determinism --------------------------------------------------------


def test_criterion_08_byte_identical_runs(tmp_path):
    with criterion(8, "same seed and simulated examinee give byte-identical log and PKG"):
        from kgexam import pkgio
        from kgexam.cli import main

        pkg, _ = synth.synth_graph(n_edges=150, seed=8)
        pkg_path = tmp_path / "graph.pkgl"
        pkgio.save_pkg(pkg, pkg_path)
        dirs = []
        for name in ("one", "two"):
            out = tmp_path / name
            code = main([
                "run", "--pkg", str(pkg_path), "--out-dir", str(out),
                "--iterations", "6", "--batch-size", "16", "--seed", "7",
                "--mode", "HARD", "--error-prob", "0.4", "--refusal-prob", "0.05",
            ])
            assert code == 0
            dirs.append(out)
        one, two = dirs
        assert (one / "interactions.jsonl").read_bytes() == (two / "interactions.jsonl").read_bytes()
        assert (one / "pkg_final.pkgl").read_bytes() == (two / "pkg_final.pkgl").read_bytes()


# -- 9: ingestion fixtures ---------------------------------------------------------------


@pytest.fixture(scope="module")
def country_store():
    endpoint = ingest.FixtureSparqlEndpoint(COUNTRY)
    seeds = ingest.load_id_list(COUNTRY / "seeds.txt")
    manifest = json.loads((COUNTRY / "manifest.json").read_text())
    walk = ingest.WalkConfig(
        seeds=seeds,
        steps=manifest["rebuild"]["steps"],
        limit=manifest["rebuild"]["limit"],
    )
    store = ingest.build_graph(endpoint, walk)
    store.apply_aliases(ingest.load_json_map(COUNTRY / "aliases.json.gz"))
    store.apply_groups(ingest.load_json_map(COUNTRY / "groups.json.gz"))
    return store, manifest


def test_criterion_09_ingestion_fixture_counts(country_store):
    with criterion(9, "frozen fixture rebuilds to the committed manifest; filters are monotone"):
        store, manifest = country_store
        assert len(store.entities) == manifest["raw"]["entities"]
        assert store.triplet_count() == manifest["raw"]["triplets"]

        language_counts = ingest.load_json_map(COUNTRY / "language_counts.json.gz")
        filtered = ingest.apply_entity_filters(
            store,
            ingest.FilterConfig(
                min_language_count=manifest["rebuild"]["min_language_count"],
                require_alias=manifest["rebuild"]["require_alias"],
            ),
            language_counts,
        )
        blocklist = ingest.load_id_list(COUNTRY / "blocklist.txt")
        active, dead = ingest.classify_edges(filtered, blocklist)
        pkg = filtered.to_parameterized()
        counts = pkg.counts()
        expected = manifest["expected"]
        assert counts["entities"] == expected["entities"]
        assert counts["predicates"] == expected["predicates"]
        assert counts["edges"] == expected["edges"]
        assert (active, dead) == (expected["active_edges"], expected["dead_edges"])

        # every stored entity is within walk depth of a seed
        depths = ingest.entity_depths(store, store.seeds)
        assert set(depths) == set(store.entities)
        assert max(depths.values()) <= manifest["rebuild"]["steps"]

        # monotonicity: tightening thresholds never adds entities or triplets
        rng = np.random.default_rng(909)
        for _ in range(100):
            lang_pair = sorted(rng.integers(0, 6, size=2))
            freq_pair = sorted(rng.integers(0, 4, size=2))
            loose = ingest.apply_entity_filters(
                store,
                ingest.FilterConfig(min_language_count=int(lang_pair[0]),
                                    require_alias=False,
                                    min_mention_frequency=int(freq_pair[0])),
                language_counts,
            )
            tight = ingest.apply_entity_filters(
                store,
                ingest.FilterConfig(min_language_count=int(lang_pair[1]),
                                    require_alias=False,
                                    min_mention_frequency=int(freq_pair[1])),
                language_counts,
            )
            assert set(tight.entities) <= set(loose.entities)
            assert set(tight.triplets) <= set(loose.triplets)


# -- 10: end-to-end simulate -----------------------------------------------------------------


def test_criterion_10_simulate_end_to_end(tmp_path):
    with criterion(10, "simulate at 60x64 defaults on 1,000 edges emits validated artifacts"):
        start = time.perf_counter()
        out = tmp_path / "sim"
        proc = subprocess.run(
            [sys.executable, "-m", "kgexam.cli", "simulate",
             "--out-dir", str(out), "--edges", "1000", "--seed", "10"],
            capture_output=True, text=True, timeout=280,
        )
        assert proc.returncode == 0, proc.stderr
        elapsed = time.perf_counter() - start
        assert elapsed < 300.0, elapsed

        for name in ("pkg_initial.pkgl", "pkg_final.pkgl", "interactions.jsonl",
                     "history.csv", "summary.json", "convergence.json",
                     "graph.dot", "report_topic.csv", "heatmap_topic.csv",
                     "config_snapshot.yaml"):
            assert (out / name).exists(), name
        for figure in ("history.png", "report_topic.png", "heatmap_topic.png"):
            assert (out / "figures" / figure).exists(), figure

        # config snapshot records the 60x64 defaults
        import yaml

        snapshot = yaml.safe_load((out / "config_snapshot.yaml").read_text())
        assert snapshot["run"]["iterations"] == 60
        assert snapshot["run"]["batch_size"] == 64

        # format validation of each artifact class
        from kgexam import pkgio

        final = pkgio.load_pkg(out / "pkg_final.pkgl")
        assert final.counts()["edges"] == 1000
        validate_dot((out / "graph.dot").read_text())

        log = exam.read_log(out / "interactions.jsonl")
        assert log.header["config"]["batch_size"] == 64
        assert log.records

        history = (out / "history.csv").read_text().splitlines()
        assert history[0] == "iteration,win_rate,zero_sense_rate"
        assert len(history) == log.records[-1].iteration + 1

        heatmap = (out / "heatmap_topic.csv").read_text().splitlines()
        assert heatmap[0].startswith("topic,")
        assert len(heatmap) >= 2

        # replay identity holds on the emitted artifacts too
        outcomes = metrics.outcomes_from_pkg(final)
        replayed = metrics.outcomes_from_records(log.records)
        assert metrics.win_rate(outcomes) == metrics.win_rate(replayed)
        assert metrics.zero_sense_rate(outcomes) == metrics.zero_sense_rate(replayed)
