"""Command-line surface.

Subcommands: learn, eval, query, bench, plot, wmi. Exit codes: 0 success,
1 usage error, 2 data/model error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench as bench_mod
from . import plotting
from .data import SplitSpec, split_dataset, load_csv
from .errors import UsageError, WmispnError
from .model_io import load_model, save_model
from .pipeline import eval_model, learn_model, write_split
from .query import answer, build_plan, normalize, parse_query
from .structure import LearnParams
from .wmi import TRUE, conditional_wmi, load_theory, parse_formula_text, wmi


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common_data_flags(p):
    p.add_argument("--delimiter", default=",", help="field separator (default ,)")
    p.add_argument("--no-header", action="store_true", help="data file has no header row")


def build_parser():
    parser = _Parser(prog="wmispn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn a model from a delimited file")
    p.add_argument("data", help="training data file")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--schema", help="sidecar schema file (name:kind[:min:max] per line)")
    p.add_argument("--bins", type=int, help="uniform bin count; omit to let BIC choose")
    p.add_argument("--bins-min", type=int, default=2)
    p.add_argument("--bins-max", type=int, default=10)
    p.add_argument("--order-min", type=int, default=0)
    p.add_argument("--order-max", type=int, default=6)
    p.add_argument("--alpha", type=float, default=0.05, help="G-test significance")
    p.add_argument("--cluster-penalty", type=float, default=0.8)
    p.add_argument("--min-slice", type=int, default=10)
    p.add_argument("--pseudo-count", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--splits-dir", help="also write train/valid/test splits here as csv")
    _add_common_data_flags(p)

    p = sub.add_parser("eval", help="average log-likelihood of a data file under a model")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--density", action="store_true",
                   help="use point densities for continuous features instead of bin masses")
    _add_common_data_flags(p)

    p = sub.add_parser("query", help="answer a probability query")
    p.add_argument("model")
    p.add_argument("query", help="e.g. \"40 <= weight <= 50 & male = 1 | class = 2\"")
    p.add_argument("--explain", action="store_true", help="print the query plan")
    p.add_argument("--multi-pass", action="store_true",
                   help="one network pass per piece fragment (differential testing)")

    p = sub.add_parser("bench", help="latency benchmark over query lengths")
    p.add_argument("model")
    p.add_argument("--lengths", default="1,2,3,4,5", help="comma-separated query lengths")
    p.add_argument("--reps", type=int, default=bench_mod.MIN_REPS,
                   help=f"repetitions per cell (floor {bench_mod.MIN_REPS})")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--include-parse", action="store_true",
                   help="time query parsing too (excluded by default)")
    p.add_argument("--out", help="write the report as delimited text (plus a .png figure)")

    p = sub.add_parser("plot", help="emit a feature's density curve as delimited text")
    p.add_argument("model")
    p.add_argument("feature")
    p.add_argument("--out", required=True, help="curve data file; a .png lands alongside")
    p.add_argument("--no-png", action="store_true", help="skip the rendered figure")
    p.add_argument("--delimiter", default="\t")

    p = sub.add_parser("wmi", help="weighted model integration of a theory file")
    p.add_argument("theory", help="theory text file (atom/formula/weight lines)")
    p.add_argument("--query", help="query formula over the theory's atoms")
    p.add_argument("--evidence", help="evidence formula over the theory's atoms")

    return parser


def _cmd_learn(args):
    params = LearnParams(alpha=args.alpha, cluster_penalty=args.cluster_penalty,
                         min_slice=args.min_slice, pseudo_count=args.pseudo_count,
                         seed=args.seed)
    result = learn_model(
        args.data, schema_path=args.schema, bins=args.bins,
        bins_grid=range(args.bins_min, args.bins_max + 1),
        order_grid=range(args.order_min, args.order_max + 1),
        params=params, split=SplitSpec(seed=args.seed),
        delimiter=args.delimiter, has_header=not args.no_header)
    save_model(result.model, args.out)
    if args.splits_dir:
        out = Path(args.splits_dir)
        out.mkdir(parents=True, exist_ok=True)
        dataset = load_csv(args.data, delimiter=args.delimiter,
                           has_header=not args.no_header)
        for name, part in zip(("train", "valid", "test"),
                              split_dataset(dataset, SplitSpec(seed=args.seed))):
            write_split(part, out / f"{name}.csv", delimiter=args.delimiter)
    tr, va, te = result.split_sizes
    print(f"split sizes: train {tr} valid {va} test {te}")
    for j, report in sorted(result.fit_reports.items()):
        name = result.model.schema[j].name
        print(f"feature {name}: bins {report.chosen_bins} order {report.chosen_order} "
              f"bic {report.bic:.3f}")
    print(f"network nodes: {len(result.model.spn.nodes)}")
    print(f"validation avg log-likelihood: {result.validation_ll:.6f} "
          f"(bin-mass, {result.validation_warnings} warnings)")
    print(f"model written to {args.out}")
    return 0


def _cmd_eval(args):
    model = load_model(args.model)
    result = eval_model(model, args.data, density_mode=args.density,
                        delimiter=args.delimiter, has_header=not args.no_header)
    if not result.digest_matches:
        print("warning: data file digest differs from the digest recorded at "
              "training time", file=sys.stderr)
    if result.clamped:
        print(f"warning: {result.clamped} continuous cells fell outside the "
              "training range and were clamped", file=sys.stderr)
    mode = "density" if args.density else "bin-mass"
    print(f"rows: {result.n_rows}")
    print(f"avg log-likelihood: {result.avg_log_likelihood:.6f} ({mode})")
    print(f"warnings: {result.warnings}")
    return 0


def _cmd_query(args):
    model = load_model(args.model)
    ast = normalize(parse_query(args.query), model.schema)
    if args.explain:
        plan = build_plan(ast.query_atoms, model.schema, model.densities)
        for line in plan.describe():
            print(line)
        if ast.evidence_atoms:
            print("evidence: " + " & ".join(a.render() for a in ast.evidence_atoms))
    value = answer(model.spn, ast, model.schema, multi_pass=args.multi_pass)
    print(f"{value:.6f}")
    return 0


def _cmd_bench(args):
    model = load_model(args.model)
    try:
        lengths = [int(v) for v in args.lengths.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"--lengths: {exc}") from exc
    if not lengths:
        raise UsageError("--lengths: need at least one length")
    report = bench_mod.run_bench(model, lengths=lengths, reps=args.reps, seed=args.seed,
                                 include_parse=args.include_parse, threads=args.threads)
    header, body = report.rows()
    widths = [max(len(str(h)), *(len(str(r[i])) for r in body)) for i, h in enumerate(header)]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in body:
        print("  ".join(str(v).ljust(w) for v, w in zip(row, widths)))
    print(f"plan-only overhead at q1: {report.plan_only_ns:.0f} ns "
          f"({100 * report.overhead_fraction:.1f}% of q1 latency)")
    if args.out:
        bench_mod.write_report(report, args.out)
        png = str(Path(args.out).with_suffix(".png"))
        plotting.render_bench_png(report, png)
        print(f"report written to {args.out} and {png}")
    return 0


def _cmd_plot(args):
    model = load_model(args.model)
    names = {c.name: j for j, c in enumerate(model.schema)}
    if args.feature not in names:
        raise UsageError(f"unknown feature {args.feature!r}; "
                         f"model has {sorted(names)}")
    j = names[args.feature]
    if model.schema[j].kind != "continuous":
        raise UsageError(f"feature {args.feature!r} is {model.schema[j].kind}; "
                         "only continuous features have density curves")
    poly = model.densities[j]
    rows = plotting.density_curve(poly)
    plotting.write_curve(rows, args.out, delimiter=args.delimiter,
                         feature_name=args.feature)
    print(f"curve data written to {args.out} "
          f"({len(rows)} samples, {len(poly.pieces)} pieces)")
    if not args.no_png:
        png = str(Path(args.out).with_suffix(".png"))
        plotting.render_curve_png(poly, png, feature_name=args.feature)
        print(f"figure written to {png}")
    return 0


def _cmd_wmi(args):
    theory = load_theory(args.theory)
    names = {a.name for a in theory.atoms}
    if args.query:
        query = parse_formula_text(args.query, names)
        evidence = parse_formula_text(args.evidence, names) if args.evidence else TRUE
        value = conditional_wmi(theory, query, evidence)
        print(f"{value:.6f}")
    else:
        print(f"{wmi(theory):.6f}")
    return 0


_COMMANDS = {
    "learn": _cmd_learn,
    "eval": _cmd_eval,
    "query": _cmd_query,
    "bench": _cmd_bench,
    "plot": _cmd_plot,
    "wmi": _cmd_wmi,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except WmispnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
