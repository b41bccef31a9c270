"""Command line entry point: ``shipwright {bench,run,plan,calibrate}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from fractions import Fraction
from pathlib import Path

from . import bench
from .clusternode import Cluster
from .config import load_profile
from .execution import Query
from .planner import Mode, WorkloadStats, calibrate, choose_mode, estimate, expected_result_entries
from .relation import GenSpec, Order, generate
from .sampling import Method, SampleSpec

log = logging.getLogger("shipwright")


def _int(text: str) -> int:
    """Accept 10000000, 1e7, 10**7."""
    if "**" in text:
        base, exp = text.split("**")
        return int(base) ** int(exp)
    value = float(text)
    if value != int(value):
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    return int(value)


def _int_list(text: str) -> list[int]:
    return [_int(t) for t in text.split(",") if t.strip()]


def _add_cluster_flags(p, with_cores=True):
    p.add_argument("--profile", default="baseline", help="profile file or bundled profile name")
    p.add_argument("--backend", choices=["sim", "socket"])
    p.add_argument("--coordinator-cores", type=int)
    if with_cores:
        p.add_argument("--worker-cores", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--cluster-size", type=_int)
    p.add_argument("--timeout-s", type=float)


def _setup_from_args(args, **fixed):
    setup = load_profile(args.profile)
    changes = {}
    for flag, key in (("backend", "backend"), ("coordinator_cores", "coordinator_cores"),
                      ("worker_cores", "worker_cores"), ("workers", "workers"),
                      ("cluster_size", "cluster_size")):
        value = getattr(args, flag, None)
        if value is not None:
            changes[key] = value
    if getattr(args, "timeout_s", None) is not None:
        changes["timeout_s"] = Fraction(repr(args.timeout_s))
    changes.update(fixed)
    return setup.replace(**changes)


def _add_data_flags(p):
    p.add_argument("--rows", type=_int, default=10**7)
    p.add_argument("--distinct-b", type=_int)
    p.add_argument("--order", choices=[o.value for o in Order])
    p.add_argument("--seed", type=_int, default=1, help="data generation seed")
    p.add_argument("--sample-seed", type=_int, default=7)
    p.add_argument("--rate", type=float)


def cmd_bench(args) -> int:
    name = bench.Experiment(args.experiment.replace("-", "_"))
    setup = load_profile(args.profile)
    spec = bench.default_spec(name, setup, rows=args.rows, seed=args.seed)
    changes = {}
    overrides = {k: v for k, v in vars(args).items() if v is not None}
    setup_changes = {}
    for flag in ("coordinator_cores", "worker_cores", "workers", "cluster_size", "backend"):
        if flag in overrides:
            setup_changes[flag] = overrides[flag]
    if "timeout_s" in overrides:
        setup_changes["timeout_s"] = Fraction(repr(args.timeout_s))
    if setup_changes:
        changes["setup"] = spec.setup.replace(**setup_changes)
    gen_changes = {}
    if args.distinct_b is not None:
        gen_changes["distinct_b"] = args.distinct_b
    if args.order is not None:
        gen_changes["order"] = Order(args.order)
    if gen_changes:
        changes["gen"] = dataclasses.replace(spec.gen, **gen_changes)
    if args.rate is not None:
        changes["rate"] = args.rate
    if args.sweep is not None:
        changes["sweep"] = args.sweep
    if args.sampling is not None:
        changes["methods"] = [Method(m) for m in args.sampling]
    changes["sample_seed"] = args.sample_seed
    changes["repetitions"] = args.repetitions
    changes["out"] = Path(args.out)
    spec = dataclasses.replace(spec, **changes)

    results = bench.run_points(spec)
    rows = bench.rows_from_points(spec, results)
    bench.write_csv(rows, spec.out)
    print(f"wrote {len(rows)} rows to {spec.out}")
    if args.plot:
        from .plotting import render

        png = render(rows, spec.out.with_suffix(".png"), title=name.value.replace("_", " "))
        print(f"wrote figure {png}")
    if args.gnuplot:
        gp = spec.out.with_suffix(".gp")
        gp.write_text(bench.gnuplot_script(spec, spec.out))
        print(f"wrote gnuplot script {gp}")
    for method in spec.methods:
        print(f"{method.value}: FS/DS crossover at {spec.sweep_param} = "
              f"{bench.crossovers(rows, method.value) or 'none'}")
    checks = bench.planner_agreement(spec, results)
    misses = [c for c in checks if c["binding"] and c["planned"] != c["simulated"]]
    print(f"planner: {len(checks) - len(misses)}/{len(checks)} points agree "
          f"({sum(c['binding'] for c in checks)} outside the 10% band)")
    return 0


def _batch(args) -> list[Query]:
    sampling = SampleSpec(Method(args.sampling), args.rate if args.rate is not None else 0.1,
                          args.sample_seed)
    return [Query(i, sampling, args.scale) for i in range(args.queries)]


def cmd_run(args) -> int:
    setup = _setup_from_args(args)
    gen = GenSpec(args.rows, args.distinct_b or 2, Order(args.order or "shuffled"), args.seed)
    rel = generate(gen)
    batch = _batch(args)
    with Cluster(setup, rel) as cluster:
        results, tel, mode = cluster.dispatch(batch, Mode(args.mode.upper()))
    print(bench.CSV_HEADER)
    spec = bench.ExperimentSpec("vary_queries", [len(batch)], gen, setup, [batch[0].sample.method],
                                repetitions=1)
    row = bench.CsvRow.from_telemetry(spec, batch[0].sample.method, len(batch), tel)
    print(",".join(dataclasses.replace(row, experiment="run").as_csv()))
    print(f"# mode={mode.value} groups={results[0].entry_count} "
          f"c_read={float(tel.breakdown.c_read):.6g} c_write={float(tel.breakdown.c_write):.6g}",
          file=sys.stderr)
    return 0


def cmd_plan(args) -> int:
    setup = _setup_from_args(args)
    batch = _batch(args)
    entries = args.entries
    if entries is None:
        entries = expected_result_entries(args.rows, args.distinct_b or 2, args.order or "shuffled",
                                          batch[0].sample, setup.cluster_size)
    est = estimate(setup, WorkloadStats(args.rows, entries, batch[0].sample, len(batch)))
    for label, b, total in (("DS", est.ds_breakdown, est.ds_total), ("FS", est.fs_breakdown, est.fs_total)):
        terms = " ".join(f"{k}={float(v):.6g}" for k, v in b.as_dict().items() if v)
        print(f"{label} total={float(total):.6g}s  {terms}")
    print(f"choose {choose_mode(est).value}")
    return 0


def cmd_calibrate(args) -> int:
    setup = load_profile(args.profile)
    rel = generate(GenSpec(args.rows, args.distinct_b or 1000, Order.SHUFFLED, args.seed))
    cal = calibrate(rel, setup, args.out)
    print(f"per_tuple_scan_ns = {cal.per_tuple_scan_s * 1e9:.4g}")
    print(f"per_tuple_agg_ns = {cal.per_tuple_agg_s * 1e9:.4g}")
    print(f"per_entry_merge_ns = {cal.per_entry_merge_s * 1e9:.4g}")
    if args.out:
        print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shipwright", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="run one experiment sweep and write CSV (+ figure)")
    p.add_argument("experiment", choices=["vary-cardinality", "vary-cores", "vary-queries"])
    p.add_argument("--out", required=True)
    _add_cluster_flags(p)
    _add_data_flags(p)
    p.add_argument("--sampling", nargs="+", choices=[m.value for m in Method])
    p.add_argument("--sweep", type=_int_list, help="comma-separated sweep values")
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--no-plot", dest="plot", action="store_false", help="skip the PNG figure")
    p.add_argument("--gnuplot", action="store_true", help="also emit a gnuplot script")
    p.set_defaults(func=cmd_bench)

    for name, func, helptext in (("run", cmd_run, "execute one batch and print its telemetry row"),
                                 ("plan", cmd_plan, "print the cost estimate and mode choice")):
        p = sub.add_parser(name, help=helptext)
        _add_cluster_flags(p)
        _add_data_flags(p)
        p.add_argument("--sampling", choices=[m.value for m in Method], default="none")
        p.add_argument("--queries", type=int, default=1)
        p.add_argument("--scale", action="store_true", help="scale sampled counts by 1/rate")
        if name == "run":
            p.add_argument("--mode", choices=["fs", "ds", "auto"], default="auto")
        else:
            p.add_argument("--entries", type=_int, help="estimated result entries")
        p.set_defaults(func=func)

    p = sub.add_parser("calibrate", help="time single-lane runs and write a profile")
    p.add_argument("--profile", default="baseline")
    p.add_argument("--rows", type=_int, default=10**6)
    p.add_argument("--distinct-b", type=_int)
    p.add_argument("--seed", type=_int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
