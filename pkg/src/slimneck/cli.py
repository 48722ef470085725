"""``slimneck`` command line: analyze, run, check, bench, dump-maps.

Exit codes: 0 success, 1 a check failed, 2 bad usage or unreadable input.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .blocks import named_rng
from .checks import SUITES, run_suite
from .cost import format_comparison, format_csv, format_table, graph_cost
from .errors import SlimneckError
from .graph import (
    dump_feature_maps,
    forward,
    forward_all,
    init_weights,
    load_weights,
    output_checksums,
    read_spec,
)
from .tensor import load_tensor, save_tensor

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _int_tuple(text, length):
    try:
        dims = tuple(int(t) for t in text.replace("x", ",").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected {length} comma-separated integers, got {text!r}") from None
    if len(dims) != length or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"expected {length} positive integers, got {text!r}")
    return dims


def _shape4(text):
    return _int_tuple(text, 4)


def _add_execution_flags(p):
    p.add_argument("--weights", type=Path, help=".nwts weight file")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for initialised weights and for --random input (default 0)")
    inp = p.add_mutually_exclusive_group()
    inp.add_argument("--input", type=Path, help=".ntsr input tensor")
    inp.add_argument("--random", action="store_true", help="standard-normal input drawn from --seed (default)")


def build_parser():
    parser = argparse.ArgumentParser(prog="slimneck", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")

    p = sub.add_parser("analyze", help="per-layer params and FLOPs of a spec")
    p.add_argument("spec", type=Path)
    p.add_argument("--input-shape", type=_shape4, metavar="N,C,H,W")
    p.add_argument("--format", choices=("table", "csv"), default="table")
    p.add_argument("--compare", type=Path, metavar="BASELINE_SPEC")
    p.add_argument("--mult-add", action="store_true", help="report multiplies and adds separately (2x MACs)")

    p = sub.add_parser("run", help="forward a spec and write its output")
    p.add_argument("spec", type=Path)
    _add_execution_flags(p)
    p.add_argument("--output", type=Path, help=".ntsr output path")
    p.add_argument("--layer", help="write this layer instead of the declared outputs")

    p = sub.add_parser("check", help="run verification suites")
    p.add_argument("--suite", choices=SUITES + ("all",), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-5)

    p = sub.add_parser("bench", help="time one operation")
    p.add_argument("--op", choices=bench_mod.OPS, required=True)
    p.add_argument("--shape", type=_shape4, default=(1, 64, 64, 64), metavar="N,C,H,W")
    p.add_argument("--out-c", type=int, default=64)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--repeat", type=int, default=10)

    p = sub.add_parser("dump-maps", help="write one PGM per channel of a layer")
    p.add_argument("spec", type=Path)
    _add_execution_flags(p)
    p.add_argument("--layer", required=True)
    p.add_argument("--outdir", type=Path, required=True)
    return parser


def _load_graph(path):
    if not path.is_file():
        raise UsageError(f"spec file not found: {path}")
    return read_spec(path)


def _weights_and_input(graph, args):
    if args.weights is not None:
        if not args.weights.is_file():
            raise UsageError(f"weights file not found: {args.weights}")
        weights = load_weights(args.weights, graph)
    else:
        weights = init_weights(graph, args.seed)
    if args.input is not None:
        if not args.input.is_file():
            raise UsageError(f"input file not found: {args.input}")
        x = load_tensor(args.input)
    else:
        x = named_rng(args.seed, "input").standard_normal(graph.input_shape).astype(np.float32)
    return weights, x


def cmd_analyze(args, out):
    graph = _load_graph(args.spec)
    report = graph_cost(graph, args.input_shape)
    render = format_csv if args.format == "csv" else format_table
    out.write(render(report, args.mult_add))
    if args.compare is not None:
        baseline = graph_cost(_load_graph(args.compare), args.input_shape)
        out.write(format_comparison(baseline, report, args.mult_add))
    return EXIT_OK


def cmd_run(args, out):
    graph = _load_graph(args.spec)
    weights, x = _weights_and_input(graph, args)
    if args.layer is not None:
        values = forward_all(graph, weights, x)
        if args.layer not in values:
            raise UsageError(f"unknown layer {args.layer!r}")
        results = {args.layer: values[args.layer]}
    else:
        results = forward(graph, weights, x)
    for name, digest in output_checksums(results).items():
        out.write(f"{name} {'x'.join(map(str, results[name].shape))} sha256={digest}\n")
    if args.output is not None:
        if len(results) == 1:
            save_tensor(next(iter(results.values())), args.output)
        else:
            for name, t in results.items():
                save_tensor(t, args.output.with_name(f"{args.output.stem}_{name}{args.output.suffix}"))
    return EXIT_OK


def cmd_check(args, out):
    results = run_suite(args.suite, seed=args.seed, tol=args.tol)
    for r in results:
        out.write(r.line() + "\n")
    failed = sum(not r.passed for r in results)
    out.write(f"{len(results) - failed}/{len(results)} checks passed\n")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def cmd_bench(args, out):
    if args.repeat < 1:
        raise UsageError("--repeat must be at least 1")
    t = bench_mod.bench(args.op, args.shape, args.out_c, args.k, args.repeat)
    shape = "x".join(map(str, args.shape))
    out.write(
        f"{args.op} shape={shape} out_c={args.out_c} k={args.k} repeat={args.repeat}: "
        f"median {t.median * 1e3:.3f} ms  p10 {t.p10 * 1e3:.3f} ms  p90 {t.p90 * 1e3:.3f} ms\n"
    )
    return EXIT_OK


def cmd_dump_maps(args, out):
    graph = _load_graph(args.spec)
    weights, x = _weights_and_input(graph, args)
    for path in dump_feature_maps(graph, weights, x, args.layer, args.outdir):
        out.write(f"{path}\n")
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "run": cmd_run,
    "check": cmd_check,
    "bench": cmd_bench,
    "dump-maps": cmd_dump_maps,
}


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.verb](args, out)
    except (UsageError, SlimneckError, ValueError, OSError) as exc:
        print(f"slimneck {args.verb}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
