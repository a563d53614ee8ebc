"""Command-line interface: ``coxql {parse,repl,stats,eval,corrupt-suite,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import dataset as ds
from .eval import (
    EvalReport, accuracy_table, category_table, corrupt_suite, render_rows, run_eval, to_csv,
)
from .lmbackend import (
    CORRUPTION_CLASSES, ConfigError, OracleBackend, backend_from_config, load_config,
    profile_from_config,
)
from .pipelines import STRATEGIES, flags_from_config, make_strategy
from .qlcore import (
    BackendFailure, CoxqlError, InvalidAst, QuerySyntaxError, default_fill, parse_query, validate,
)

EXIT_OK, EXIT_INVALID, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3
DATA_ENV = "COXQL_DATA_DIR"

log = logging.getLogger("coxql")
_FAILURE_PREFIXES = ("BackendFailure", "BackendTimeout", "HttpStatus", "MalformedResponse", "UnmappedQuestion")


def _load_split(path, split: str) -> ds.Dataset:
    """A file path, ``sample`` for the bundled corpus, or None for the released/bundled default."""
    if path == "sample":
        return ds.bundled_split(split)
    if path:
        return ds.load(path, split=split)
    released = ds.released_split(split, os.environ.get(DATA_ENV))
    return released if released is not None else ds.bundled_split(split)


def _backend(config_path, mapping, seed):
    if not config_path:
        return OracleBackend(mapping)
    parser = load_config(config_path)
    return backend_from_config(parser, mapping, seed)


# --------------------------------------------------------------------------
# subcommands


def cmd_parse(args) -> int:
    try:
        query = parse_query(args.query)
    except QuerySyntaxError as exc:
        print(f"syntax error: {exc} (tokens {exc.span[0]}..{exc.span[1]})")
        return EXIT_INVALID
    print(f"terminal:  {query.terminal.value}")
    print(f"category:  {query.category.value}")
    for clause, conn in query.filters:
        print(f"filter:    {' '.join(clause.tokens())}  [{conn}]")
    for slot in query.slots:
        print(f"slot:      {type(slot).__name__} {' '.join(slot.tokens())}")
    report = validate(query)
    if report.ok:
        print(f"canonical: {' '.join(query.tokens())}")
        return EXIT_OK
    print("violations: " + ", ".join(map(str, report.violations)))
    try:
        print(f"default-filled: {' '.join(default_fill(query).tokens())}")
    except CoxqlError:
        pass
    return EXIT_INVALID


def cmd_repl(args) -> int:
    train = _load_split(args.train, "train")
    gold = _load_split(args.gold, "test") if args.gold else train
    parser = load_config(args.config) if args.config else None
    backend = None if args.strategy == "nn" else _backend(args.config, gold.mapping(), args.seed)
    predict = make_strategy(args.strategy, backend, train, flags=flags_from_config(parser))
    interactive = sys.stdin.isatty()
    while True:
        if interactive:
            print("question> ", end="", flush=True)
        line = sys.stdin.readline()
        if not line:
            break
        question = line.strip()
        if not question:
            continue
        try:
            pred = predict(question)
        except BackendFailure as exc:
            print(f"backend error: {exc}")
            continue
        print(pred.text if pred.valid else f"{pred.text}  (invalid{': ' + pred.error if pred.error else ''})")
        if args.trace and pred.trace is not None:
            for step in pred.trace.steps:
                print(f"  {step.name:<16} {step.output}")
    return EXIT_OK


def cmd_stats(args) -> int:
    data = _load_split(args.file, args.split)
    stats = ds.statistics(data)
    print(json.dumps(stats, indent=2) if args.format == "json" else ds.render_statistics(stats))
    return EXIT_OK


def _write_report_files(reports, out_dir) -> list[Path]:
    from .plotting import accuracy_figure, category_figure

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    strategies = [s for s in STRATEGIES if any(r.strategy == s for r in reports)]
    acc_path = out_dir / "accuracy.csv"
    acc_path.write_text(to_csv(accuracy_table(reports), ["model"] + strategies), encoding="utf-8")
    cat_path = out_dir / "category_f1.csv"
    cat_path.write_text(to_csv(category_table(reports)), encoding="utf-8")
    return [acc_path, cat_path, accuracy_figure(reports, out_dir / "accuracy.png"),
            category_figure(reports, out_dir / "category_f1.png")]


def cmd_eval(args) -> int:
    train = _load_split(args.train, "train")
    test = _load_split(args.test, "test")
    parser = load_config(args.config) if args.config else None
    flags = flags_from_config(parser)
    reports = []
    for strategy in args.strategy:
        backend = None if strategy == "nn" else _backend(args.config, test.mapping(), args.seed)
        report = run_eval(strategy, test, backend, train, flags)
        reports.append(report)
        if report.n and all(d.error.startswith(_FAILURE_PREFIXES) for d in report.instance_diffs):
            print(report.instance_diffs[0].error, file=sys.stderr)
            raise BackendFailure(f"every question failed for strategy {strategy}")
        print(report.render(show_errors=args.show_errors))
        print()
    print(render_rows(accuracy_table(reports)))
    if args.out:
        Path(args.out).write_text(json.dumps([r.to_dict() for r in reports], indent=2), encoding="utf-8")
        print(f"wrote {args.out}")
    if args.report_dir:
        for path in _write_report_files(reports, args.report_dir):
            print(f"wrote {path}")
    return EXIT_OK


def cmd_corrupt_suite(args) -> int:
    test = _load_split(args.test, "test")
    seed, rate, flags = 0, 0.5, None
    classes = CORRUPTION_CLASSES
    if args.profile:
        parser = load_config(args.profile)
        profile = profile_from_config(parser)
        seed = profile.seed
        classes = profile.error_classes or CORRUPTION_CLASSES
        rate = parser.getfloat("corruption", "mixed_rate", fallback=rate)
        flags = flags_from_config(parser)
    result = corrupt_suite(test, classes, seeds=range(seed, seed + args.seeds), mixed_rate=rate,
                           flags=flags, seed=seed)
    print(render_rows(result.table()))
    print()
    print(render_rows(result.dominance_table()))
    if args.report_dir:
        from .plotting import suite_figure

        out = Path(args.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "corrupt_suite.csv").write_text(to_csv(result.table()), encoding="utf-8")
        (out / "dominance.csv").write_text(to_csv(result.dominance_table()), encoding="utf-8")
        print(f"wrote {suite_figure(result.table(), out / 'corrupt_suite.png')}")
    print("repair guarantee: " + ("ok" if result.ok else "VIOLATED"))
    return EXIT_OK if result.ok else EXIT_INVALID


def cmd_report(args) -> int:
    reports = []
    for path in args.reports:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ds.DataError(f"cannot read report {path}: {exc}") from exc
        items = data if isinstance(data, list) else [data]
        reports += [EvalReport.from_dict(item) for item in items]
    if not reports:
        raise ds.DataError("no reports given")
    print(render_rows(accuracy_table(reports)))
    print()
    print(render_rows(category_table(reports)))
    for path in _write_report_files(reports, args.out_dir):
        print(f"wrote {path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coxql", description="Query language and intent parsers for conversational XAI.")
    p.add_argument("-v", "--verbose", action="store_true", help="log debug output")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("parse", help="parse and validate a query")
    sp.add_argument("query")
    sp.set_defaults(func=cmd_parse)

    data_help = "corpus file (.jsonl or .tsv), or 'sample' for the bundled corpus"

    sp = sub.add_parser("repl", help="interactive question -> parse loop")
    sp.add_argument("--strategy", choices=STRATEGIES, default="mp+")
    sp.add_argument("--train", help=data_help)
    sp.add_argument("--gold", help="question/parse file answered by oracle-style backends")
    sp.add_argument("--config", help="INI config with [backend] / [repair] sections")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--trace", action="store_true", help="print template-check steps")
    sp.set_defaults(func=cmd_repl)

    sp = sub.add_parser("stats", help="dataset statistics")
    sp.add_argument("file", nargs="?", help=data_help)
    sp.add_argument("--split", choices=ds.SPLITS, default="train")
    sp.add_argument("--format", choices=("text", "json"), default="text")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("eval", help="score strategies on a test split")
    sp.add_argument("--strategy", action="append", choices=STRATEGIES, required=True,
                    help="repeat to compare several strategies")
    sp.add_argument("--train", help=data_help)
    sp.add_argument("--test", help=data_help)
    sp.add_argument("--config", help="INI config; without it an oracle backend answers from the test golds")
    sp.add_argument("--seed", type=int, help="override the corruption seed")
    sp.add_argument("--out", help="write reports as JSON")
    sp.add_argument("--report-dir", help="write CSV tables and PNG figures here")
    sp.add_argument("--show-errors", type=int, default=10, help="error diffs to print per strategy")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("corrupt-suite", help="repair-guarantee matrix over corruption classes")
    sp.add_argument("--profile", help="INI file with a [corruption] section")
    sp.add_argument("--test", help=data_help)
    sp.add_argument("--seeds", type=int, default=10, help="mixed-profile dominance runs")
    sp.add_argument("--report-dir", help="write CSV tables and a PNG figure here")
    sp.set_defaults(func=cmd_corrupt_suite)

    sp = sub.add_parser("report", help="render comparison tables and figures from saved reports")
    sp.add_argument("reports", nargs="+", help="JSON files written by 'eval --out'")
    sp.add_argument("--out-dir", default="report")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ds.DataError, ConfigError, InvalidAst) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BackendFailure as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
