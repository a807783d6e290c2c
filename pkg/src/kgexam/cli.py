"""Operator entry point: build-graph, run, simulate, report, export.

Configuration layers as file < environment < flags; every run writes a
config snapshot next to its artifacts so the exact invocation can be
replayed.  Credentials are only ever named (environment-variable
indirection), never stored.

Exit codes: 0 success, 1 operational failure (including refusing to
overwrite without --force), 2 usage error, 3 run aborted with partial
artifacts flushed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import yaml

from . import __version__, exam, ingest, llm, metrics, pkgio, questions, synth
from .graph import ParameterizedKG

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_ABORTED = 3

ENV_PREFIX = "KGEXAM_"

_RUN_FIELDS = {
    "iterations": int,
    "batch_size": int,
    "mode": str,
    "seed": int,
    "convergence_window": int,
    "convergence_epsilon": float,
    "propagation_enabled": bool,
    "propagate_to_dead": bool,
    "max_in_flight": int,
    "error_prob": float,
    "refusal_prob": float,
    "examinee": str,
    "question_mode": str,
}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_FAILURE):
        super().__init__(message)
        self.code = code


def _coerce(value, kind):
    if kind is bool and isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")
    return kind(value)


def layered_run_settings(config_file: str | None, cli_values: dict) -> dict:
    """defaults < config file < environment < flags"""
    settings: dict = {
        "iterations": 60,
        "batch_size": 64,
        "mode": questions.EASY,
        "seed": 0,
        "convergence_window": 5,
        "convergence_epsilon": 0.005,
        "propagation_enabled": True,
        "propagate_to_dead": False,
        "max_in_flight": 1,
        "error_prob": 0.3,
        "refusal_prob": 0.0,
        "examinee": "simulated",
        "question_mode": "template",
    }
    if config_file:
        loaded = yaml.safe_load(Path(config_file).read_text(encoding="utf-8")) or {}
        run_section = loaded.get("run", loaded)
        for key, kind in _RUN_FIELDS.items():
            if key in run_section and run_section[key] is not None:
                settings[key] = _coerce(run_section[key], kind)
    for key, kind in _RUN_FIELDS.items():
        env_value = os.environ.get(ENV_PREFIX + key.upper())
        if env_value is not None:
            settings[key] = _coerce(env_value, kind)
    for key, value in cli_values.items():
        if key in _RUN_FIELDS and value is not None:
            settings[key] = value
    return settings


def _run_config(settings: dict) -> exam.RunConfig:
    return exam.RunConfig(
        iterations=settings["iterations"],
        batch_size=settings["batch_size"],
        mode=settings["mode"],
        seed=settings["seed"],
        convergence_window=settings["convergence_window"],
        convergence_epsilon=settings["convergence_epsilon"],
        propagation_enabled=settings["propagation_enabled"],
        propagate_to_dead=settings["propagate_to_dead"],
        max_in_flight=settings["max_in_flight"],
    ).validate()


def _check_out_path(path: Path, force: bool) -> None:
    if path.exists() and not force:
        raise CliError(f"refusing to overwrite {path} (pass --force)")


def _ensure_dir(path: Path) -> None:
    path.mkdir(parents=True, exist_ok=True)


def _client_from_config(section: dict) -> llm.ChatClient:
    return llm.ChatClient(llm.ClientConfig(**section))


def _load_client_configs(path: str | None) -> dict:
    if not path:
        return {}
    return yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}


def _deterministic_run_id(snapshot: dict) -> str:
    digest = hashlib.sha256(json.dumps(snapshot, sort_keys=True, default=str).encode("utf-8")).hexdigest()
    return f"run-{digest[:12]}"


def _write_history_csv(history, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "win_rate", "zero_sense_rate"])
        for i, (win, zero) in enumerate(history, start=1):
            writer.writerow([i, f"{win:.6f}", f"{zero:.6f}"])


def _write_summary(path: Path, result: exam.RunResult, pkg: ParameterizedKG) -> dict:
    outcomes = metrics.outcomes_from_pkg(pkg)
    examined = sum(1 for o in outcomes if o.examined)
    summary = {
        "run_id": result.run_id,
        "iterations_run": result.iterations_run,
        "converged_at": result.converged_at,
        "exam_records": len(result.records),
        "examined_edges": examined,
        "graph": pkg.counts(),
    }
    if examined:
        summary["win_rate"] = metrics.win_rate(outcomes)
        summary["zero_sense_rate"] = metrics.zero_sense_rate(outcomes)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


# -- build-graph ---------------------------------------------------------


def cmd_build_graph(args: argparse.Namespace) -> int:
    out_path = Path(args.out)
    _check_out_path(out_path, args.force)

    seeds = ingest.load_id_list(args.seeds)
    if not seeds:
        raise CliError(f"seeds file {args.seeds} is empty")
    walk = ingest.WalkConfig(
        seeds=seeds,
        steps=args.steps,
        limit=args.limit,
        directions=tuple(args.directions.split(",")),
    )
    if args.fixture:
        endpoint = ingest.FixtureSparqlEndpoint(args.fixture)
        fixture_dir = Path(args.fixture)
    elif args.endpoint:
        endpoint = ingest.SparqlHttpEndpoint(args.endpoint)
        fixture_dir = None
    else:
        raise CliError("either --endpoint or --fixture is required")

    store = ingest.build_graph(endpoint, walk)
    raw_counts = {"entities": len(store.entities), "triplets": store.triplet_count()}

    def sidecar(flag_value, name):
        if flag_value:
            return Path(flag_value)
        if fixture_dir is not None:
            for suffix in ("", ".gz"):
                candidate = fixture_dir / f"{name}{suffix}"
                if candidate.exists():
                    return candidate
        return None

    aliases_path = sidecar(args.aliases, "aliases.json")
    if aliases_path:
        store.apply_aliases(ingest.load_json_map(aliases_path))
    groups_path = sidecar(args.groups, "groups.json")
    if groups_path:
        store.apply_groups(ingest.load_json_map(groups_path))
    lang_path = sidecar(args.language_counts, "language_counts.json")
    language_counts = ingest.load_json_map(lang_path) if lang_path else {}

    filters = ingest.FilterConfig(
        min_language_count=args.min_language_count,
        require_alias=not args.no_require_alias,
        min_mention_frequency=args.min_mention_frequency,
    )
    store = ingest.apply_entity_filters(store, filters, language_counts)

    blocklist_path = sidecar(args.blocklist, "blocklist.txt")
    blocklist = ingest.load_id_list(blocklist_path) if blocklist_path else []
    active, dead = ingest.classify_edges(store, blocklist)

    pkg = store.to_parameterized()
    pkgio.save_pkg(pkg, out_path)

    report = {
        "raw_crawl": raw_counts,
        "graph": pkg.counts(),
        "active_edges": active,
        "dead_edges": dead,
        "skipped_rows": endpoint.skipped_rows,
        "seeds": len(seeds),
        "blocklist_size": len(blocklist),
    }
    report_path = out_path.with_name(out_path.name + ".build.json")
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"built {out_path}: {pkg.counts()}")
    return EXIT_OK


# -- run ------------------------------------------------------------------


def _prepare_roles(settings: dict, client_configs: dict, pkg: ParameterizedKG):
    """Resolve examinee/generator/judge per the settings; simulated roles are
    seeded from the run seed."""
    if settings["examinee"] == "simulated":
        examinee = llm.SimulatedExaminee(
            default_error_prob=settings["error_prob"],
            refusal_prob=settings["refusal_prob"],
            seed=settings["seed"] + 1,
        )
        judge = llm.SimulatedJudge()
        generator = None
        deterministic = True
    elif settings["examinee"] == "http":
        if "examinee" not in client_configs:
            raise CliError("--client-config with an 'examinee' section is required for --examinee http")
        examinee = llm.HttpExaminee(_client_from_config(client_configs["examinee"]))
        judge_section = client_configs.get("judge", client_configs["examinee"])
        judge = llm.HttpJudge(_client_from_config(judge_section))
        generator = None
        if settings["question_mode"] == "llm":
            gen_section = client_configs.get("generator", client_configs["examinee"])
            generator = _client_from_config(gen_section)
        deterministic = False
    else:
        raise CliError(f"unknown examinee kind {settings['examinee']!r}")
    return examinee, generator, judge, deterministic


def _execute_run(pkg: ParameterizedKG, settings: dict, client_configs: dict,
                 out_dir: Path, error_probs: dict | None = None,
                 answers_path: str | None = None) -> tuple[exam.RunResult, dict]:
    config = _run_config(settings)
    examinee, generator, judge, deterministic = _prepare_roles(settings, client_configs, pkg)
    if error_probs is not None and isinstance(examinee, llm.SimulatedExaminee):
        examinee.error_prob = dict(error_probs)
    answers = None
    if answers_path:
        supplements = pkgio.load_triplet_records(answers_path)
        answers = questions.build_answer_sets(pkg, supplements)

    snapshot = {
        "kgexam_version": __version__,
        "run": {**settings},
        "clients": {
            role: dict(section, api_key_env=section.get("api_key_env", "KGEXAM_API_KEY"))
            for role, section in client_configs.items()
        },
    }
    run_id = _deterministic_run_id(snapshot)
    snapshot["run_id"] = run_id
    (out_dir / "config_snapshot.yaml").write_text(
        yaml.safe_dump(snapshot, sort_keys=True), encoding="utf-8"
    )

    clock = exam.LogicalClock() if deterministic else None
    log_path = out_dir / "interactions.jsonl"
    try:
        result = exam.run_evaluation(
            pkg,
            config,
            examinee,
            generator=generator,
            judge=judge,
            answers=answers,
            log_path=log_path,
            clock=clock,
            run_id=run_id,
        )
    except exam.RunAborted as aborted:
        partial = aborted.partial
        pkgio.save_pkg(partial.pkg, out_dir / "pkg_final.pkgl")
        _write_history_csv(partial.history, out_dir / "history.csv")
        _write_summary(out_dir / "summary.json", partial, partial.pkg)
        raise CliError(f"run aborted: {aborted} (partial artifacts in {out_dir})", EXIT_ABORTED) from aborted

    pkgio.save_pkg(result.pkg, out_dir / "pkg_final.pkgl")
    _write_history_csv(result.history, out_dir / "history.csv")
    summary = _write_summary(out_dir / "summary.json", result, result.pkg)
    return result, summary


def cmd_run(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not args.force:
        raise CliError(f"output directory {out_dir} is not empty (pass --force)")
    _ensure_dir(out_dir)

    settings = layered_run_settings(args.config, {
        "iterations": args.iterations,
        "batch_size": args.batch_size,
        "mode": args.mode,
        "seed": args.seed,
        "propagation_enabled": None if args.propagation is None else args.propagation,
        "error_prob": args.error_prob,
        "refusal_prob": args.refusal_prob,
        "examinee": args.examinee,
        "question_mode": args.question_mode,
        "max_in_flight": args.max_in_flight,
    })
    client_configs = _load_client_configs(args.client_config)
    pkg = pkgio.load_pkg(args.pkg)
    result, summary = _execute_run(pkg, settings, client_configs, out_dir,
                                   answers_path=args.answers)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


# -- simulate --------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not args.force:
        raise CliError(f"output directory {out_dir} is not empty (pass --force)")
    _ensure_dir(out_dir)

    settings = layered_run_settings(args.config, {
        "iterations": args.iterations,
        "batch_size": args.batch_size,
        "mode": args.mode,
        "seed": args.seed,
        "examinee": "simulated",
    })
    pkg, error_probs = synth.synth_graph(n_edges=args.edges, seed=settings["seed"])
    pkgio.save_pkg(pkg, out_dir / "pkg_initial.pkgl")

    result, summary = _execute_run(pkg, settings, {}, out_dir, error_probs=error_probs)

    outcomes = metrics.outcomes_from_pkg(result.pkg)
    (out_dir / "graph.dot").write_text(metrics.export_pkg_dot(result.pkg), encoding="utf-8")
    report = metrics.group_metrics(result.pkg, outcomes, "topic")
    (out_dir / "report_topic.csv").write_text(metrics.grouped_report_csv(report), encoding="utf-8")
    table = metrics.heatmap_table(result.pkg, outcomes, "topic")
    (out_dir / "heatmap_topic.csv").write_text(metrics.heatmap_csv(table), encoding="utf-8")

    convergence = {
        "converged_at": result.converged_at,
        "iterations_run": result.iterations_run,
        "final_win_rate": result.history[-1][0] if result.history else None,
        "final_zero_sense_rate": result.history[-1][1] if result.history else None,
    }
    (out_dir / "convergence.json").write_text(
        json.dumps(convergence, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    if not args.no_figures:
        from . import plots

        fig_dir = out_dir / "figures"
        _ensure_dir(fig_dir)
        plots.plot_history(result.history, fig_dir / "history.png")
        plots.plot_grouped(report, fig_dir / "report_topic.png")
        plots.plot_heatmap(table, fig_dir / "heatmap_topic.png")

    print(json.dumps({**summary, "convergence": convergence}, indent=2, sort_keys=True))
    return EXIT_OK


# -- report / export --------------------------------------------------------


def _outcomes_for_report(args: argparse.Namespace, pkg: ParameterizedKG | None):
    if args.log:
        log = exam.read_log(args.log)
        return metrics.outcomes_from_records(log.records)
    if pkg is None:
        raise CliError("a --pkg file is required when no --log is given")
    return metrics.outcomes_from_pkg(pkg)


def cmd_report(args: argparse.Namespace) -> int:
    if not args.pkg and not args.log:
        raise CliError("report needs --pkg and/or --log")
    pkg = pkgio.load_pkg(args.pkg) if args.pkg else None
    outcomes = _outcomes_for_report(args, pkg)
    out_dir = Path(args.out_dir)
    _ensure_dir(out_dir)

    try:
        global_metrics = {
            "examined_edges": sum(1 for o in outcomes if o.examined),
            "win_rate": metrics.win_rate(outcomes),
            "zero_sense_rate": metrics.zero_sense_rate(outcomes),
        }
    except metrics.UndefinedMetricError as exc:
        raise CliError(f"metrics undefined: {exc}") from exc
    (out_dir / "metrics.json").write_text(
        json.dumps(global_metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    written = [out_dir / "metrics.json"]

    report = None
    table = None
    if args.group_by:
        if pkg is None:
            raise CliError("--group-by needs --pkg for entity metadata")
        try:
            report = metrics.group_metrics(pkg, outcomes, args.group_by,
                                           use_object_groups=args.object_groups)
        except metrics.UnknownDimensionError as exc:
            raise CliError(str(exc)) from exc
        path = out_dir / f"report_{args.group_by}.csv"
        path.write_text(metrics.grouped_report_csv(report), encoding="utf-8")
        written.append(path)
        if args.format in ("heatmap", "all") and args.group_by != "predicate":
            table = metrics.heatmap_table(pkg, outcomes, args.group_by,
                                          statistic=args.statistic,
                                          use_object_groups=args.object_groups)
            path = out_dir / f"heatmap_{args.group_by}.csv"
            path.write_text(metrics.heatmap_csv(table), encoding="utf-8")
            written.append(path)

    if args.format in ("dot", "all"):
        if pkg is None:
            raise CliError("--format dot needs --pkg")
        path = out_dir / "graph.dot"
        path.write_text(metrics.export_pkg_dot(pkg), encoding="utf-8")
        written.append(path)

    if not args.no_figures and (report is not None or table is not None):
        from . import plots

        fig_dir = out_dir / "figures"
        _ensure_dir(fig_dir)
        if report is not None:
            plots.plot_grouped(report, fig_dir / f"report_{args.group_by}.png")
            written.append(fig_dir / f"report_{args.group_by}.png")
        if table is not None:
            plots.plot_heatmap(table, fig_dir / f"heatmap_{args.group_by}.png")
            written.append(fig_dir / f"heatmap_{args.group_by}.png")

    print(json.dumps(global_metrics, indent=2, sort_keys=True))
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    pkg = pkgio.load_pkg(args.pkg)
    out_path = Path(args.out)
    _check_out_path(out_path, args.force)
    if args.format == "dot":
        out_path.write_text(metrics.export_pkg_dot(pkg), encoding="utf-8")
    else:
        outcomes = metrics.outcomes_from_pkg(pkg)
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([
                "edge_id", "subject", "predicate", "object", "active",
                "alpha", "beta", "posterior_mean", "n_correct", "n_incorrect",
            ])
            for eid in sorted(pkg.edges):
                edge = pkg.edges[eid]
                writer.writerow([
                    edge.id, edge.subject, edge.predicate, edge.object,
                    edge.active, repr(edge.params.alpha), repr(edge.params.beta),
                    f"{edge.params.mean:.6f}", edge.n_correct, edge.n_incorrect,
                ])
        del outcomes
    print(f"wrote {out_path}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgexam",
        description="Adaptive knowledge-graph examination of language models.",
    )
    parser.add_argument("--verbose", action="store_true", help="log progress at INFO level")
    parser.add_argument("--version", action="version", version=f"kgexam {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="crawl a topic graph and write a PKG file")
    p.add_argument("--seeds", required=True, help="text file of seed entity ids")
    p.add_argument("--endpoint", help="SPARQL endpoint URL")
    p.add_argument("--fixture", help="frozen fixture directory (offline endpoint)")
    p.add_argument("--steps", type=int, default=3)
    p.add_argument("--limit", type=int, default=10000, help="per-step result limit")
    p.add_argument("--directions", default="forward,backward")
    p.add_argument("--aliases", help="sidecar JSON map id -> [aliases]")
    p.add_argument("--groups", help="sidecar JSON map id -> {dimension: value}")
    p.add_argument("--language-counts", help="sidecar JSON map id -> language count")
    p.add_argument("--min-language-count", type=int, default=0)
    p.add_argument("--min-mention-frequency", type=int, default=0)
    p.add_argument("--no-require-alias", action="store_true")
    p.add_argument("--blocklist", help="text file of dead-predicate ids")
    p.add_argument("--out", required=True, help="output PKG path")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("run", help="examine a model against a PKG file")
    p.add_argument("--pkg", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", help="YAML config file (lowest-priority layer)")
    p.add_argument("--client-config", help="YAML with examinee/generator/judge client sections")
    p.add_argument("--examinee", choices=["simulated", "http"], default=None)
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--mode", choices=list(questions.MODES))
    p.add_argument("--seed", type=int)
    p.add_argument("--error-prob", type=float, help="simulated examinee error probability")
    p.add_argument("--refusal-prob", type=float)
    p.add_argument("--max-in-flight", type=int)
    p.add_argument("--question-mode", choices=["template", "llm"], default=None)
    p.add_argument("--answers", help="supplemental answer file (PKG triplet records) merged into the truth/candidate sets")
    prop = p.add_mutually_exclusive_group()
    prop.add_argument("--propagation", dest="propagation", action="store_true", default=None)
    prop.add_argument("--no-propagation", dest="propagation", action="store_false")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="synthesize a graph and run a simulated evaluation")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--edges", type=int, default=1000)
    p.add_argument("--config")
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--mode", choices=list(questions.MODES))
    p.add_argument("--seed", type=int)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="metric tables and exports from a PKG and/or log")
    p.add_argument("--pkg")
    p.add_argument("--log")
    p.add_argument("--group-by", help="entity group dimension or 'predicate'")
    p.add_argument("--statistic", choices=["zero_sense", "win"], default="zero_sense")
    p.add_argument("--object-groups", action="store_true",
                   help="group by the object entity instead of the subject")
    p.add_argument("--format", choices=["csv", "dot", "heatmap", "all"], default="csv")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("export", help="export a PKG file as DOT or a CSV edge table")
    p.add_argument("--pkg", required=True)
    p.add_argument("--format", choices=["dot", "csv"], default="dot")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (pkgio.PkgFormatError, ingest.IngestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
