"""Command-line interface.

One subcommand per pipeline stage (parse, breakdown, classify, analyze),
plus evaluation against a gold corpus (evaluate, agreement), prompt
search (optimize), and the HTTP service (serve).

Exit codes: 0 success, 1 operational failure, 2 usage error. Usage
errors print the command synopsis to standard error.

With ``--out``, report-producing commands also render figures next to
the output file (suffixed ``.confusion.png`` and so on); ``--no-figures``
turns that off.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import report
from .bpmn import extract_activities, parse_bpmn_file, summarize_context
from .datastore import RunStore, load_corpus, split_corpus
from .errors import ProcessLensError
from .evaluation import pooled_breakdown_report, pooled_vaa_report
from .gateway import build_gateway
from .metrics import annotation_matrix_from_json, krippendorff_alpha_nominal
from .optimizer import (
    Objective,
    SearchSpace,
    greedy_coordinate_search,
    make_eval_fn,
    trace_to_csv,
    trace_to_json,
)
from .pipeline import (
    ActivityStatus,
    Step,
    config_label,
    make_step_id,
    run_breakdown,
    run_full,
    run_to_csv,
    run_to_json,
    run_vaa,
)
from .prompts import (
    ZERO_SHOT_LABEL,
    Phase,
    config_from_spec,
    load_catalog,
    load_default_catalog,
    optimal_config,
)

PROVIDERS = ("remote", "mock", "replay")
FORMATS = ("json", "csv", "table")

OBJECTIVES = {
    "breakdown-score": Objective.breakdown_score,
    "macro-f1": Objective.macro_f1,
    "nva-f1": Objective.nva_f1,
}


class UsageError(Exception):
    """Bad flag combination or argument value; exits 2 with a synopsis."""


# ---------------------------------------------------------------------------
# Shared resolution helpers
# ---------------------------------------------------------------------------


def _catalog(args):
    return load_catalog(args.catalog) if args.catalog else load_default_catalog()


def _gateway(args):
    if args.provider == "replay" and not args.cache:
        raise UsageError("--provider replay requires --cache DIR")
    return build_gateway(args.provider, cache_dir=args.cache)


def _corpus(args):
    if not args.corpus:
        raise UsageError("this command requires --corpus DIR")
    return load_corpus(args.corpus)


def _split_processes(args, corpus):
    if args.split == "all":
        return list(corpus)
    manifest = Path(args.corpus) / "splits.json"
    if manifest.exists():
        split = split_corpus(corpus, manifest=manifest)
    else:
        split = split_corpus(corpus, seed=args.seed)
    wanted = split.dev_ids if args.split == "dev" else split.test_ids
    return [p for p in corpus if p.process_id in wanted]


def _config_from_entry(entry, phase, catalog):
    try:
        return config_from_spec(catalog, phase, entry)
    except ProcessLensError as exc:
        raise UsageError(str(exc)) from exc


def _configs(args, catalog):
    """Resolve --config into (breakdown, vaa) configurations.

    Accepts the labels "zero-shot" and "optimal", or a path to a JSON
    file {"breakdown": <label or slot mapping>, "vaa": ...}.
    """
    value = args.config or ZERO_SHOT_LABEL
    if value == ZERO_SHOT_LABEL:
        return None, None
    if value == "optimal":
        return optimal_config(catalog, Phase.BREAKDOWN), optimal_config(catalog, Phase.VAA)
    path = Path(value)
    if not path.is_file():
        raise UsageError(
            f"--config expects '{ZERO_SHOT_LABEL}', 'optimal', or a JSON file, got {value!r}"
        )
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise UsageError("--config file must be a JSON object")
    return (
        _config_from_entry(data.get("breakdown"), Phase.BREAKDOWN, catalog),
        _config_from_entry(data.get("vaa"), Phase.VAA, catalog),
    )


def _deliver(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _figures_on(args) -> bool:
    return bool(args.out) and not args.no_figures


def _sibling(out, suffix: str) -> Path:
    path = Path(out)
    return path.with_name(path.stem + suffix)


def _json_text(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _csv_text(headers, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(headers)
    writer.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_parse(args) -> int:
    model = parse_bpmn_file(args.bpmn, strict=args.strict, domain_tag=args.domain_tag)
    for warning in model.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    nodes = extract_activities(model)
    contexts = [summarize_context(model, node.node_id) for node in nodes]
    kinds = {node.node_id: node.kind.value for node in nodes}
    fmt = args.fmt or "table"
    if fmt == "json":
        text = _json_text(
            {
                "process_id": model.process_id,
                "process_name": model.name,
                "domain_tag": model.domain_tag,
                "warnings": list(model.warnings),
                "activities": [
                    {
                        "activity_id": c.activity_id,
                        "activity_name": c.activity_name,
                        "kind": kinds[c.activity_id],
                        "lane": c.lane,
                        "predecessors": list(c.predecessors),
                        "successors": list(c.successors),
                    }
                    for c in contexts
                ],
            }
        )
    elif fmt == "csv":
        text = _csv_text(
            ["activity_id", "activity_name", "kind", "lane", "predecessors", "successors"],
            [
                [
                    c.activity_id,
                    c.activity_name,
                    kinds[c.activity_id],
                    c.lane or "",
                    ";".join(c.predecessors),
                    ";".join(c.successors),
                ]
                for c in contexts
            ],
        )
    else:
        text = f"process: {model.name} ({model.process_id})\n" + report.render_table(
            ["Activity", "Name", "Kind", "Lane"],
            [[c.activity_id, c.activity_name, kinds[c.activity_id], c.lane or "-"] for c in contexts],
            align="left",
        )
    _deliver(args, text)
    return 0


def cmd_breakdown(args) -> int:
    model = parse_bpmn_file(args.bpmn, domain_tag=args.domain_tag)
    catalog = _catalog(args)
    breakdown_config, _ = _configs(args, catalog)
    steps, statuses = run_breakdown(model, breakdown_config, _gateway(args), catalog=catalog)
    failed = sorted(a for a, s in statuses.items() if s is not ActivityStatus.OK)
    for activity_id in failed:
        print(f"warning: breakdown failed for activity {activity_id}", file=sys.stderr)
    fmt = args.fmt or "table"
    if fmt == "json":
        text = _json_text(
            {
                "process_id": model.process_id,
                "configuration": config_label(breakdown_config),
                "steps": [
                    {
                        "step_id": s.step_id,
                        "activity_id": s.activity_id,
                        "ordinal": s.ordinal,
                        "text": s.text,
                    }
                    for s in steps
                ],
                "failed_activities": failed,
            }
        )
    elif fmt == "csv":
        text = _csv_text(
            ["step_id", "activity_id", "ordinal", "text"],
            [[s.step_id, s.activity_id, s.ordinal, s.text] for s in steps],
        )
    else:
        text = report.render_table(
            ["Activity", "#", "Step"],
            [[s.activity_id, str(s.ordinal), s.text] for s in steps],
            align="left",
        )
    _deliver(args, text)
    return 0


def cmd_classify(args) -> int:
    data = json.loads(Path(args.steps).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        process_name = str(data.get("process_name", "")) or "ad-hoc process"
        texts = data.get("steps")
    else:
        process_name = "ad-hoc process"
        texts = data
    if not isinstance(texts, list) or not texts or not all(isinstance(t, str) for t in texts):
        raise ProcessLensError(f"{args.steps}: expected a JSON list of step texts")
    steps = [
        Step(make_step_id("adhoc", "steps", i), "steps", i, text)
        for i, text in enumerate(texts, 1)
    ]
    catalog = _catalog(args)
    _, vaa_config = _configs(args, catalog)
    classifications, failed = run_vaa(
        steps, vaa_config, _gateway(args), process_name=process_name, catalog=catalog
    )
    if failed:
        raise ProcessLensError("classification failed; rerun or adjust the configuration")
    text_of = {s.step_id: s.text for s in steps}
    rows = [
        (i, text_of[c.step_id], c.label.value, c.justification)
        for i, c in enumerate(classifications, 1)
    ]
    fmt = args.fmt or "table"
    if fmt == "json":
        text = _json_text(
            [
                {"ordinal": i, "text": t, "label": label, "justification": justification}
                for i, t, label, justification in rows
            ]
        )
    elif fmt == "csv":
        text = _csv_text(["ordinal", "text", "label", "justification"], rows)
    else:
        text = report.render_table(
            ["#", "Label", "Step"], [[str(i), label, t] for i, t, label, _ in rows], align="left"
        )
    _deliver(args, text)
    return 0


def cmd_analyze(args) -> int:
    if bool(args.bpmn) == bool(args.corpus):
        raise UsageError("analyze takes either a BPMN file or --corpus DIR")
    catalog = _catalog(args)
    breakdown_config, vaa_config = _configs(args, catalog)
    gateway = _gateway(args)
    store = RunStore(args.store) if args.store else None
    fmt = args.fmt or "json"

    def one(model):
        return run_full(
            model,
            breakdown_config,
            vaa_config,
            gateway,
            store=store,
            catalog=catalog,
            provider_label=args.provider,
        )

    if args.corpus:
        runs = [one(p.model) for p in load_corpus(args.corpus)]
        if fmt == "json":
            text = _json_text({"runs": [run_to_json(r) for r in runs]})
        elif fmt == "csv":
            raise UsageError("--format csv needs a single BPMN file; use json with --corpus")
        else:
            text = report.render_table(
                ["Run", "Process", "Steps", "Failed activities"],
                [
                    [
                        r.run_id,
                        r.process_id,
                        str(len(r.steps)),
                        str(sum(1 for s in r.statuses.values() if s is not ActivityStatus.OK)),
                    ]
                    for r in runs
                ],
            )
        _deliver(args, text)
        return 0

    run = one(parse_bpmn_file(args.bpmn, domain_tag=args.domain_tag))
    if fmt == "json":
        text = _json_text(run_to_json(run))
    elif fmt == "csv":
        text = run_to_csv(run)
    else:
        label_of = {c.step_id: c.label.value for c in run.classifications}
        text = f"run: {run.run_id} process: {run.process_id}\n" + report.render_table(
            ["Activity", "#", "Label", "Step"],
            [
                [s.activity_id, str(s.ordinal), label_of.get(s.step_id, "-"), s.text]
                for s in run.steps
            ],
            align="left",
        )
    _deliver(args, text)
    if _figures_on(args) and run.classifications:
        report.save_distribution_bar(run, _sibling(args.out, ".distribution.png"))
    return 0


def cmd_evaluate(args) -> int:
    corpus = _corpus(args)
    processes = _split_processes(args, corpus)
    if not processes:
        raise ProcessLensError(f"split {args.split!r} selected no processes")
    catalog = _catalog(args)
    breakdown_config, vaa_config = _configs(args, catalog)
    gateway = _gateway(args)

    triples: list = []
    alignment = pooled_breakdown_report(
        processes, breakdown_config, gateway, catalog=catalog, collect_alignments=triples
    )
    vaa_report, matrix, note = pooled_vaa_report(processes, vaa_config, gateway, catalog=catalog)

    alignment_row = report.alignment_summary_from_report(config_label(breakdown_config), alignment)
    vaa_rows = [(config_label(vaa_config), vaa_report)]
    fmt = args.fmt or "table"
    if fmt == "json":
        text = _json_text(
            {
                "split": args.split,
                "processes": [p.process_id for p in processes],
                "configuration": {
                    "breakdown": config_label(breakdown_config),
                    "vaa": config_label(vaa_config),
                },
                "breakdown_alignment": {
                    "rows": json.loads(report.render_alignment_summary([alignment_row], "json")),
                    "total_generated": alignment.total_generated,
                    "total_ground_truth": alignment.total_ground_truth,
                    "flagged_step_ids": list(alignment.flagged_step_ids),
                },
                "classification": {
                    "rows": json.loads(report.render_classification_summary(vaa_rows, "json")),
                    "note": note,
                },
                "confusion": report.confusion_payload(matrix),
            }
        )
    elif fmt == "csv":
        text = (
            "# breakdown alignment\n"
            + report.render_alignment_summary([alignment_row], "csv")
            + "\n# classification\n"
            + report.render_classification_summary(vaa_rows, "csv")
            + "\n# confusion\n"
            + report.render_confusion(matrix, "csv")
        )
    else:
        parts = [
            f"Activity breakdown alignment "
            f"({alignment.total_generated} generated / {alignment.total_ground_truth} gold)",
            report.render_alignment_summary([alignment_row], "table"),
            "Step classification",
            report.render_classification_summary(vaa_rows, "table"),
        ]
        if note:
            parts.append(f"note: {note}")
        parts += ["Confusion matrix (gold rows)", report.render_confusion(matrix, "table")]
        text = "\n".join(parts) + ("\n" if not parts[-1].endswith("\n") else "")
    _deliver(args, text)
    if args.out:
        _sibling(args.out, ".steps.csv").write_text(
            report.alignment_steps_csv(triples), encoding="utf-8"
        )
    if _figures_on(args):
        report.save_confusion_heatmap(matrix, _sibling(args.out, ".confusion.png"))
        report.save_alignment_bars([alignment_row], _sibling(args.out, ".alignment.png"))
    return 0


def cmd_agreement(args) -> int:
    data = json.loads(Path(args.matrix).read_text(encoding="utf-8"))
    matrix = annotation_matrix_from_json(data)
    alpha = krippendorff_alpha_nominal(matrix)
    fmt = args.fmt or "table"
    if fmt == "json":
        text = _json_text(
            {"alpha": alpha, "items": len(matrix.rows), "annotators": len(matrix.annotators)}
        )
    elif fmt == "csv":
        text = _csv_text(["alpha"], [[f"{alpha:.6f}"]])
    else:
        text = f"α = {alpha:.3f}\n"
    _deliver(args, text)
    return 0


def cmd_optimize(args) -> int:
    phase = Phase.BREAKDOWN if args.phase == "breakdown" else Phase.VAA
    objective_name = args.objective or ("breakdown-score" if phase is Phase.BREAKDOWN else "macro-f1")
    if phase is Phase.BREAKDOWN and objective_name != "breakdown-score":
        raise UsageError("phase breakdown only supports --objective breakdown-score")
    if phase is Phase.VAA and objective_name == "breakdown-score":
        raise UsageError("phase vaa needs --objective macro-f1 or nva-f1")
    if args.passes < 1:
        raise UsageError("--passes must be at least 1")
    corpus = _corpus(args)
    processes = _split_processes(args, corpus)
    if not processes:
        raise ProcessLensError(f"split {args.split!r} selected no processes")
    catalog = _catalog(args)
    space = SearchSpace.from_catalog(catalog, phase)
    eval_fn = make_eval_fn(
        phase, processes, _gateway(args), catalog=catalog, objective=OBJECTIVES[objective_name]()
    )
    best, trace = greedy_coordinate_search(space, eval_fn, passes=args.passes)
    best_score = max(trace.best_score_series)
    fmt = args.fmt or "table"
    if fmt == "json":
        text = _json_text(
            {
                "phase": phase.value,
                "objective": objective_name,
                "best_score": best_score,
                "best_assignment": dict(best.assignment),
                "passes_run": trace.passes_run,
                "fresh_evaluations": trace.fresh_evaluations(),
                "trace": trace_to_json(trace),
            }
        )
    elif fmt == "csv":
        text = trace_to_csv(trace)
    else:
        lines = [
            f"phase: {phase.value}",
            f"objective: {objective_name}",
            f"passes run: {trace.passes_run}",
            f"fresh evaluations: {trace.fresh_evaluations()}",
            f"best score: {best_score:.4f}",
            "best configuration:",
        ]
        lines += [f"  {slot}: {variant}" for slot, variant in best.assignment.items()]
        text = "\n".join(lines) + "\n"
    _deliver(args, text)
    if _figures_on(args):
        report.save_score_series(trace.best_score_series, _sibling(args.out, ".series.png"))
    return 0


def cmd_serve(args) -> int:
    from .service import create_app
    import uvicorn

    store = RunStore(args.store or "runs")
    # The built review UI is served when present; the API works without it.
    candidates = [
        Path("frontend/dist"),
        Path(__file__).resolve().parents[2] / "frontend" / "dist",
    ]
    static_dir = next((c for c in candidates if c.is_dir()), None)
    app = create_app(
        store=store,
        catalog=_catalog(args),
        gateway=_gateway(args),
        corpus=load_corpus(args.corpus) if args.corpus else None,
        static_dir=static_dir,
    )
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except SystemExit as exc:
        # uvicorn exits 3 on startup failures such as an occupied port;
        # fold that into the documented operational exit code.
        if exc.code:
            print(f"error: service failed to start (exit {exc.code})", file=sys.stderr)
            return 1
    return 0


# ---------------------------------------------------------------------------
# Parser assembly and dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--provider", choices=PROVIDERS, default="mock")
    common.add_argument("--catalog", metavar="DIR", help="prompt catalog directory")
    common.add_argument("--corpus", metavar="DIR", help="gold corpus directory")
    common.add_argument("--store", metavar="DIR", help="run store directory")
    common.add_argument(
        "--config",
        metavar="LABEL_OR_FILE",
        help="'zero-shot', 'optimal', or a JSON file with per-phase configs",
    )
    common.add_argument("--seed", type=int, default=0, help="seed for random corpus splits")
    common.add_argument("--out", metavar="PATH", help="write output here instead of stdout")
    common.add_argument("--format", choices=FORMATS, dest="fmt", help="output format")
    common.add_argument("--cache", metavar="DIR", help="record/replay cache directory")
    common.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    parser = argparse.ArgumentParser(prog="processlens", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func, _parser=p)
        return p

    p = add("parse", cmd_parse, "parse a BPMN file and list its activities")
    p.add_argument("bpmn", help="path to a BPMN 2.0 XML file")
    p.add_argument("--strict", action="store_true", help="fail on structural warnings")
    p.add_argument("--domain-tag", default="", help="domain hint passed to prompts")

    p = add("breakdown", cmd_breakdown, "break activities into atomic steps")
    p.add_argument("bpmn", help="path to a BPMN 2.0 XML file")
    p.add_argument("--domain-tag", default="")

    p = add("classify", cmd_classify, "classify given steps as VA/BVA/NVA")
    p.add_argument("steps", help="JSON file: list of step texts or {process_name, steps}")

    p = add("analyze", cmd_analyze, "full pipeline: breakdown then classification")
    p.add_argument("bpmn", nargs="?", help="path to a BPMN 2.0 XML file")
    p.add_argument("--domain-tag", default="")

    p = add("evaluate", cmd_evaluate, "score configurations against the gold corpus")
    p.add_argument("--split", choices=("all", "dev", "test"), default="all")

    p = add("agreement", cmd_agreement, "Krippendorff's alpha over an annotation matrix")
    p.add_argument("matrix", help="JSON annotation matrix file")

    p = add("optimize", cmd_optimize, "greedy coordinate search over prompt variants")
    p.add_argument("--phase", choices=("breakdown", "vaa"), required=True)
    p.add_argument("--objective", choices=tuple(OBJECTIVES))
    p.add_argument("--passes", type=int, default=2)
    p.add_argument("--split", choices=("all", "dev", "test"), default="dev")

    p = add("serve", cmd_serve, "run the HTTP review service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args) or 0
    except UsageError as exc:
        print(args._parser.format_usage(), file=sys.stderr, end="")
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON input: {exc}", file=sys.stderr)
        return 1
    except ProcessLensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
