"""Command line entry points: run a model file, or run a benchmark."""

import argparse
import json
import sys

from austere.errors import AustereError, ConfigError


def build_parser():
    parser = argparse.ArgumentParser(
        prog="austere",
        description="trace MCMC with exact and subsampled Metropolis-Hastings",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a program file")
    run_p.add_argument("model", help="path to the program")
    run_p.add_argument("--bind", action="append", default=[],
                       metavar="NAME=VALUE",
                       help="fill one program placeholder")
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--chains", type=int, default=1)
    run_p.add_argument("--out", default=None,
                       help="write sample CSV here (default stdout)")

    bench_p = sub.add_parser("bench", help="run a benchmark")
    bench_p.add_argument(
        "kind",
        choices=("sublinearity", "sv", "conjugate", "error-curve"),
    )
    bench_p.add_argument("--seed", type=int, default=7)
    bench_p.add_argument("--eps", type=float, default=0.01,
                         help="sequential test tolerance")
    bench_p.add_argument("--batch", type=int, default=100)
    bench_p.add_argument("--out", default=None)
    bench_p.add_argument("--n-grid", default=None,
                         help="comma separated observation counts")
    bench_p.add_argument("--iters", type=int, default=None)
    bench_p.add_argument("--burnin", type=int, default=None)
    bench_p.add_argument("--trials", type=int, default=None)
    return parser


def _cmd_run(args):
    from austere.runner import parse_binding, run_source

    bindings = {}
    for text in args.bind:
        name, value = parse_binding(text)
        bindings[name] = value
    with open(args.model) as fh:
        source = fh.read()
    recorder, _ = run_source(source, bindings, seed=args.seed, chains=args.chains)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            recorder.write_csv(fh)
        print(recorder.summary_json())
    else:
        sys.stdout.write(recorder.csv_text())
    return 0


def _cmd_bench(args):
    from austere import bench

    if args.kind == "sublinearity":
        n_grid = None
        if args.n_grid:
            n_grid = [int(p) for p in args.n_grid.split(",")]
        rows = bench.run_sublinearity(
            seed=args.seed,
            n_grid=n_grid,
            tolerance=args.eps,
            batch_size=args.batch,
            trials=args.trials or 300,
        )
        _emit(args.out, bench.SUBLINEARITY_HEADER, rows)
        return 0
    if args.kind == "error-curve":
        rows = bench.run_error_curve(
            seed=args.seed,
            batch_size=args.batch,
            trials=args.trials or 10000,
        )
        _emit(args.out, bench.ERROR_CURVE_HEADER, rows)
        return 0
    if args.kind == "sv":
        exact, sub = bench.run_sv_comparison(
            seed=args.seed,
            sweeps=args.iters or 600,
            burnin=args.burnin or 100,
            batch_size=args.batch,
            tolerance=args.eps,
        )
        rows = bench.sv_rows(exact, sub)
        _emit(args.out, bench.SV_HEADER, rows)
        report = {
            "exact_ess_per_sec": exact["ess_phi"] / (exact["wall_ns"] * 1e-9),
            "subsampled_ess_per_sec": sub["ess_phi"] / (sub["wall_ns"] * 1e-9),
            "state_to_param_ratio": exact["ratio"],
        }
        print(json.dumps(report, indent=2, sort_keys=True))
        return 0
    if args.kind == "conjugate":
        result = bench.run_conjugate_check(
            seed=args.seed,
            steps=args.iters or 20000,
            burnin=args.burnin or 500,
        )
        report = {k: v for k, v in result.items() if k != "samples"}
        print(json.dumps(report, indent=2, sort_keys=True))
        if args.out:
            bench.write_csv(
                args.out, ("iter", "mu"),
                [(i, repr(float(v))) for i, v in enumerate(result["samples"])],
            )
        return 0
    raise ConfigError("unknown benchmark %r" % args.kind)


def _emit(path, header, rows):
    import csv

    if path:
        from austere.bench import write_csv

        write_csv(path, header, rows)
        return
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "bench":
            return _cmd_bench(args)
        raise ConfigError("unknown command %r" % args.command)
    except ConfigError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except AustereError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
