"""Command-line pipeline: parse, graph, analyze, dataset, vocab, synth,
train, eval, gradcheck.

Everything flows through files; there is no state between commands. Data
goes to stdout or --out files, logs and diagnostics go to stderr. Commands
that write files also write an `<out>.run.json` echo of their invocation so
any result can be regenerated. Exit codes: 0 success, 1 usage, 2 data
error, 3 check failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

from . import checks, model as M, synth
from .analyses import TASKS, AnalysisError, run_oracle
from .dataset import (DatasetError, SchemaError, dataset_stats, derive_seed,
                      deserialize_examples, deserialize_graphs, encode_labels,
                      filter_by_steps, generate_examples, read_text,
                      serialize_examples, serialize_graphs, split_dataset,
                      write_text)
from .graph import InvalidModule, build_graph, graph_stats, to_dot
from .ir import ParseError, parse_module, validate
from .vocab import coverage, derive_vocab, read_vocab, write_vocab

log = logging.getLogger("irflow")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CHECK = 3

_DATA_ERRORS = (ParseError, InvalidModule, SchemaError, DatasetError,
                AnalysisError, FileNotFoundError, ValueError,
                ZeroDivisionError, json.JSONDecodeError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _echo_run(out_base: str, args: argparse.Namespace):
    payload = {"command": args.command, "argv": sys.argv[1:],
               "seed": getattr(args, "seed", None)}
    with open(out_base + ".run.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _emit(obj):
    print(json.dumps(obj, sort_keys=True))


def _load_modules(paths, jobs=1):
    def load(path):
        module = parse_module(read_text(path), source_id=os.path.basename(path))
        return path, module

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(load, paths))
    return [load(p) for p in paths]


def cmd_parse(args) -> int:
    failures = 0
    for path in args.files:
        try:
            module = parse_module(read_text(path), source_id=os.path.basename(path))
        except ParseError as exc:
            for d in exc.diagnostics:
                print(d.render(path), file=sys.stderr)
            failures += 1
            continue
        diags = validate(module)
        for d in diags:
            print(d.render(path), file=sys.stderr)
        failures += bool(diags)
    return EXIT_DATA if failures else EXIT_OK


def cmd_graph(args) -> int:
    graphs = []
    for path, module in _load_modules(args.files, args.jobs):
        diags = validate(module)
        if diags:
            for d in diags:
                print(d.render(path), file=sys.stderr)
            return EXIT_DATA
        graphs.append(build_graph(module))
    graphs.sort(key=lambda g: g.source_id)
    write_text(args.out, serialize_graphs(graphs))
    _echo_run(args.out, args)
    if args.dot:
        write_text(args.dot, "".join(to_dot(g, g.source_id) for g in graphs))
    for g in graphs:
        _emit({"source_id": g.source_id, **graph_stats(g)})
    return EXIT_OK


def cmd_analyze(args) -> int:
    graphs = deserialize_graphs(read_text(args.graphs))
    if not graphs:
        print("no graphs in input", file=sys.stderr)
        return EXIT_DATA
    graph = graphs[0]
    if args.source_id:
        matches = [g for g in graphs if g.source_id == args.source_id]
        if not matches:
            print(f"no graph with source_id {args.source_id!r}", file=sys.stderr)
            return EXIT_DATA
        graph = matches[0]
    result = run_oracle(args.task, graph, args.root)
    _emit({"source_id": graph.source_id, "task": args.task, "root": args.root,
           "step_count": result.step_count,
           "labels": encode_labels(result.labels),
           "positives": [i for i, v in enumerate(result.labels) if v]})
    return EXIT_OK


def cmd_dataset(args) -> int:
    graphs = deserialize_graphs(read_text(args.graphs))
    examples = generate_examples(graphs, args.task, args.seed, jobs=args.jobs)
    if args.ddf_steps is not None:
        examples = filter_by_steps(examples, args.ddf_steps)
    split = split_dataset(examples, args.seed)
    suffix = ".examples.jsonl" + (".gz" if args.gzip else "")
    report = {"overall": dataset_stats(examples)}
    for name, part in (("train", split.train), ("val", split.val), ("test", split.test)):
        write_text(f"{args.out}.{name}{suffix}", serialize_examples(part))
        report[name] = dataset_stats(part)
    _echo_run(args.out, args)
    _emit(report)
    return EXIT_OK


def cmd_vocab(args) -> int:
    if args.vocab_command == "derive":
        graphs = []
        for path in args.graphs:
            graphs.extend(deserialize_graphs(read_text(path)))
        vocab = derive_vocab(graphs)
        write_vocab(vocab, args.out)
        _echo_run(args.out, args)
        _emit({"entries": len(vocab.entries)})
        return EXIT_OK
    vocab = read_vocab(args.vocab)
    graphs = []
    for path in args.graphs:
        graphs.extend(deserialize_graphs(read_text(path)))
    _emit({"coverage": coverage(vocab, graphs)})
    return EXIT_OK


def cmd_synth(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    manifest = []
    for source_id, text in synth.generate_corpus(args.count, args.seed, args.profile):
        path = os.path.join(args.out, f"{source_id}.ll")
        write_text(path, text)
        manifest.append(source_id)
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=0)
        fh.write("\n")
    _echo_run(os.path.join(args.out, "corpus"), args)
    _emit({"count": len(manifest), "dir": args.out})
    return EXIT_OK


def cmd_train(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        spec = json.load(fh)
    task = args.task or spec.get("task")
    if task not in TASKS:
        print(f"unknown task {task!r}", file=sys.stderr)
        return EXIT_USAGE
    config = M.ModelConfig(**spec.get("model", {}))
    train_ex = [e for e in deserialize_examples(read_text(spec["train"])) if e.task == task]
    val_ex = [e for e in deserialize_examples(read_text(spec["val"])) if e.task == task]
    if not train_ex:
        print("no training examples for task", file=sys.stderr)
        return EXIT_DATA
    result = M.train(train_ex, val_ex, config)
    out = spec.get("out", args.config.rsplit(".", 1)[0])
    M.save_model(out, result.params, result.vocab, config)
    with open(out + ".history.jsonl", "w", encoding="utf-8") as fh:
        for row in result.history:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    _echo_run(out, args)
    _emit({"task": task, "best_val_f1": result.best_f1,
           "best_step": result.best_step, "history_rows": len(result.history)})
    return EXIT_OK


def cmd_eval(args) -> int:
    params, vocab, config = M.load_model(args.checkpoint)
    examples = deserialize_examples(read_text(args.examples))
    if args.task:
        examples = [e for e in examples if e.task == args.task]
    if args.max_steps is not None:
        examples = filter_by_steps(examples, args.max_steps)
    if not examples:
        print("no examples to evaluate", file=sys.stderr)
        return EXIT_DATA
    metrics = M.evaluate(params, examples, vocab, config, args.steps)
    payload = metrics.as_dict()
    payload["examples"] = len(examples)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")
        _echo_run(args.out, args)
    _emit(payload)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    failed = False
    for name, err in checks.primitive_grad_checks(args.seed):
        ok = err < 1e-4
        failed |= not ok
        print(f"primitive {name}: max_rel_err={err:.3e} {'PASS' if ok else 'FAIL'}")
    if args.full_model:
        for i in range(args.batches):
            t = (i % 3) + 1
            err = checks.full_model_check(args.seed + i, T=t, sample=args.sample)
            ok = err < 1e-4
            failed |= not ok
            print(f"full-model batch={i} T={t}: max_rel_err={err:.3e} "
                  f"{'PASS' if ok else 'FAIL'}")
    return EXIT_CHECK if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="irflow")
    parser.add_argument("--verbosity", type=int, default=0,
                        help="0 warnings, 1 info, 2 debug (stderr)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse and validate IR files")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("graph", help="build program graphs from IR files")
    p.add_argument("files", nargs="+")
    p.add_argument("--out", required=True, help="output .graphs.jsonl[.gz]")
    p.add_argument("--dot", help="also write DOT to this path")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("analyze", help="run one analysis oracle")
    p.add_argument("graphs")
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--root", required=True, type=int)
    p.add_argument("--source-id")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("dataset", help="generate, filter, split, and write examples")
    p.add_argument("graphs")
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--ddf-steps", type=int, default=None,
                   help="keep examples needing at most this many oracle steps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--gzip", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("vocab", help="vocabulary derivation and coverage")
    vocab_sub = p.add_subparsers(dest="vocab_command", required=True)
    d = vocab_sub.add_parser("derive")
    d.add_argument("graphs", nargs="+")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_vocab)
    c = vocab_sub.add_parser("coverage")
    c.add_argument("graphs", nargs="+")
    c.add_argument("--vocab", required=True)
    c.set_defaults(func=cmd_vocab)

    p = sub.add_parser("synth", help="write random well-formed IR files")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--profile", default="mixed", choices=synth.PROFILES)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one per-task model")
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--config", required=True, help="JSON: train/val paths, out, model")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on examples")
    p.add_argument("--checkpoint", required=True, help="path to .ckpt")
    p.add_argument("--examples", required=True)
    p.add_argument("--steps", type=int, required=True, help="propagation steps")
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--max-steps", type=int, default=None,
                   help="only evaluate examples within this oracle step count")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--full-model", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batches", type=int, default=6)
    p.add_argument("--sample", type=int, default=6)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbosity, logging.DEBUG)
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
