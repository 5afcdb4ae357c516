"""Command-line entry point.

    prisample sample   --input flows.csv --scheme pri --k 100 --seed 1 --out s.json
    prisample estimate --sample s.json --where app=web --weight-range 1000:
    prisample verify   --suite identities --trials 1000000
    prisample compare  --synthetic table1-mix:n=10000 --k-grid 25,50,100 --out results/

Exit status: 0 on success, 1 when a verification check fails, 2 on usage or
input errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import asdict
from typing import Iterable, Optional

from . import estimators as est
from .harness import SUITES, run_comparison, run_suite
from .model import ItemRecord, SeededGenerator
from .samplers import (
    PriorityReservoir,
    RelaxedBuffer,
    ThresholdReservoir,
    UniformReservoir,
    WeightedWithReplacement,
    prioritized_stream,
)
from .store import CountingReader, InputError, load_sample, read_records, save_sample
from .traces import TraceSpec, generate_trace

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2

SCHEMES = ("pri", "thr", "uwr", "wwr", "pri-relaxed")
DEFAULT_TRIALS = {"identities": 1_000_000, "closed-forms": 1_000_000, "oracle": 0,
                  "exactify": 1000, "conjecture": 100_000}
DEFAULT_K_GRID = "25,50,100,150,200,400,800"


class UsageError(Exception):
    pass


def build_sample(records: Iterable[ItemRecord], scheme: str, k: int, seed: int):
    """Run one sampler over the records in a single pass."""
    gen = SeededGenerator(seed)
    if scheme == "pri":
        res = PriorityReservoir(k)
        res.extend(prioritized_stream(records, gen))
    elif scheme == "pri-relaxed":
        res = RelaxedBuffer(k)
        res.extend(prioritized_stream(records, gen))
    elif scheme == "thr":
        res = ThresholdReservoir(k)
        res.extend(prioritized_stream(records, gen))
    elif scheme == "uwr":
        res = UniformReservoir(k, gen)
        res.extend(records)
    elif scheme == "wwr":
        res = WeightedWithReplacement(k, gen)
        res.extend(records)
    else:
        raise UsageError(f"unknown scheme {scheme!r}")
    return res.finalize()


def _distinct(sample) -> int:
    if hasattr(sample, "entries"):
        return len(sample.entries)
    if hasattr(sample, "distinct_items"):
        return len(sample.distinct_items())
    return len(sample.items)


def cmd_sample(args, out=None) -> int:
    out = out or sys.stdout
    if args.k < 1:
        raise UsageError("--k must be at least 1")
    if bool(args.input) == bool(args.synthetic):
        raise UsageError("give exactly one of --input or --synthetic")
    if args.input:
        with open(args.input, encoding="utf-8", newline="") as fh:
            reader = CountingReader(fh)
            sample = build_sample(read_records(reader), args.scheme, args.k, args.seed)
        assert reader.passes == 1
    else:
        trace = generate_trace(TraceSpec.parse(args.synthetic))
        sample = build_sample(iter(trace), args.scheme, args.k, args.seed)
    save_sample(args.out, sample, args.seed, "relaxed" if args.scheme == "pri-relaxed" else "")
    threshold = getattr(sample, "threshold", None)
    print(f"n={sample.items_seen}", file=out)
    print(f"distinct={_distinct(sample)}", file=out)
    print(f"threshold={threshold!r}" if threshold is not None else "threshold=none", file=out)
    return EXIT_OK


def _sample_keys(sample) -> set:
    if hasattr(sample, "entries"):
        items = [e.item for e in sample.entries]
    elif hasattr(sample, "distinct_items"):
        items = list(sample.distinct_items().values())
    else:
        items = list(sample.items)
    return {key for it in items for key in it.attributes}


def cmd_estimate(args, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    sample = load_sample(args.sample)
    try:
        pred = est.SubsetPredicate.parse(args.where or (), args.weight_range)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    unknown = sorted(pred.keys - _sample_keys(sample))
    if unknown:
        print(f"warning: no sampled item carries attribute(s) {', '.join(unknown)}; estimate is 0",
              file=err)
    report = est.subset_estimate(sample, pred, args.mode)
    if args.csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "weight_estimate", "variance_estimate"])
        for c in report.contributions:
            w.writerow([c.id, repr(c.weight_estimate), repr(c.variance_estimate)])
        w.writerow(["total", repr(report.estimate), repr(report.variance)])
        out.write(buf.getvalue())
    else:
        out.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")
    for note in report.notes:
        print(f"note: {note}", file=err)
    return EXIT_OK


def cmd_verify(args, out=None) -> int:
    out = out or sys.stdout
    trials = args.trials if args.trials is not None else DEFAULT_TRIALS[args.suite]
    report = run_suite(args.suite, trials, args.seed)
    for c in report.checks:
        out.write(json.dumps({"suite": args.suite, **c.to_dict()}, sort_keys=True, default=float) + "\n")
    summary = {"suite": args.suite, "summary": True, "checks": len(report.checks),
               "failed": len(report.failures()), "passed": report.passed}
    out.write(json.dumps(summary, sort_keys=True) + "\n")
    return EXIT_OK if report.passed else EXIT_FAILED


def _write_rows(path: str, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if not rows:
            return
        fields = list(asdict(rows[0]))
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in asdict(r).items()})


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise UsageError("k values must be positive")
    return vals


def cmd_compare(args, out=None) -> int:
    out = out or sys.stdout
    trace = generate_trace(TraceSpec.parse(args.synthetic))
    schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    try:
        res = run_comparison(trace, schemes, _int_list(args.k_grid), args.replicates, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    os.makedirs(args.out, exist_ok=True)
    paths = {
        "comparison": os.path.join(args.out, "comparison.csv"),
        "matrix": os.path.join(args.out, "matrix_error.csv"),
        "distinct": os.path.join(args.out, "distinct.csv"),
    }
    _write_rows(paths["comparison"], res.rows)
    _write_rows(paths["matrix"], res.matrix)
    _write_rows(paths["distinct"], res.distinct)
    with open(os.path.join(args.out, "trace_summary.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(trace.summary, sort_keys=True, indent=1) + "\n")
    for name, path in paths.items():
        print(f"{name}: {path}", file=out)
    if args.figures:
        from .report import write_figures

        for path in write_figures(res, args.out):
            print(f"figure: {path}", file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prisample", description="Priority sampling for subset-sum estimation.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="sample a weighted stream and persist the sample")
    s.add_argument("--input", help="CSV with header; columns id, weight, optional secondary, attributes")
    s.add_argument("--synthetic", help="trace spec such as table1-mix:n=10000,seed=1")
    s.add_argument("--scheme", choices=SCHEMES, default="pri")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("estimate", help="estimate a subset sum from a persisted sample")
    e.add_argument("--sample", required=True)
    e.add_argument("--where", action="append", metavar="KEY=VALUE")
    e.add_argument("--weight-range", metavar="LO:HI")
    fmt = e.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true", help="JSON report (default)")
    fmt.add_argument("--csv", action="store_true", help="per-item CSV plus a total row")
    e.add_argument("--mode", choices=(est.PRESENCE, est.COUNT), default=est.PRESENCE,
                   help="estimator for with-replacement samples")
    e.set_defaults(func=cmd_estimate)

    v = sub.add_parser("verify", help="run a verification suite; JSON lines on stdout")
    v.add_argument("--suite", choices=tuple(SUITES), required=True)
    v.add_argument("--trials", type=int)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("compare", help="compare schemes on a synthetic trace; writes CSVs")
    c.add_argument("--synthetic", default="table1-mix:n=10000")
    c.add_argument("--schemes", default="pri,thr,uwr,wwr")
    c.add_argument("--k-grid", default=DEFAULT_K_GRID)
    c.add_argument("--replicates", type=int, default=100)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--figures", action="store_true", help="also render PNG figures into --out")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, InputError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
