"""Command line: ``minobs solve`` and ``minobs optimize``.

Exit codes: 0 solved or optimized, 1 no controllable set (or the given set
loses), 2 usage error, 3 model error.
"""
from __future__ import annotations

import argparse
import sys

from . import report as rep
from .finite import ModelError
from .modelfile import BUNDLED, load_model
from .optimizer import (DEFAULT_MAX_OBS, HEURISTICS, CostFunction, SolutionRecord, Solver,
                        optimize)

EXIT_OK, EXIT_LOSE, EXIT_USAGE, EXIT_MODEL = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _param(text):
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=INT, got {text!r}")
    try:
        return name.strip(), int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"parameter {name!r}: {value!r} is not an integer") from None


def make_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("model", help=f"model file, or one of: {', '.join(BUNDLED)}")
    common.add_argument("--set", dest="params", action="append", type=_param, default=[],
                        metavar="NAME=INT", help="override a model parameter (e.g. n=5)")
    common.add_argument("--oracle", choices=("zone", "region"), default="zone",
                        help="symbolic zone construction or the region-graph oracle")
    common.add_argument("--output", "-o", help="write the report here instead of stdout")
    common.add_argument("--max-regions", type=int, default=200_000, help=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="minobs", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="decide one observation set")
    s.add_argument("--obs", action="append", default=[], metavar="ID",
                   help="observed predicate (repeatable); the safety predicate is always added")
    o = sub.add_parser("optimize", parents=[common], help="find a cheapest winning observation set")
    o.add_argument("--obs", action="append", default=[], metavar="ID",
                   help="restrict the available predicates (repeatable; default: the whole catalog)")
    o.add_argument("--heuristic", choices=HEURISTICS, default="cheap-first")
    o.add_argument("--reuse", action=argparse.BooleanOptionalAction, default=True,
                   help="build coarser knowledge games on top of finer ones")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--max-obs", type=int, default=DEFAULT_MAX_OBS,
                   help="refuse catalogs with more predicates than this")
    o.add_argument("--trace", action="store_true", help="print each iteration to stderr as it finishes")
    o.add_argument("--jobs", type=int, default=1, help="parallel solves (requires --no-reuse)")
    o.add_argument("--reuse-requires-full", action="store_true",
                   help="build losing games completely so they can be reused too")
    return p


def _check_obs(model, ids):
    unknown = sorted(set(ids) - set(model.predicates))
    if unknown:
        raise UsageError(f"unknown predicates {unknown}; catalog: {sorted(model.predicates)}")


def run(args, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    model = load_model(args.model, dict(args.params))
    _check_obs(model, args.obs)
    cost = CostFunction.of_model(model)
    if args.command == "solve":
        obs = frozenset(args.obs) | {model.safety}
        solver = Solver(model, args.oracle, args.max_regions)
        step, _ = solver.solve(obs)
        record = SolutionRecord([step])
        best = obs if step.verdict else None
        settings = {"oracle": args.oracle, "observable": sorted(obs)}
        code = EXIT_OK if step.verdict else EXIT_LOSE
    else:
        if args.jobs < 1:
            raise UsageError("--jobs must be positive")
        if args.jobs > 1 and args.reuse:
            raise UsageError("--jobs > 1 requires --no-reuse")
        if args.reuse_requires_full and not args.reuse:
            raise UsageError("--reuse-requires-full needs --reuse")
        available = frozenset(args.obs) | {model.safety} if args.obs else None
        if len(available or model.predicates) > args.max_obs:
            raise UsageError(f"{len(available or model.predicates)} observable predicates exceed "
                             f"--max-obs {args.max_obs}")

        def trace(step):
            if args.trace:
                tag = f" reused from {','.join(step.reused_from)}" if step.reused else ""
                print(f"[{'win ' if step.verdict else 'lose'}] {','.join(step.obs)} "
                      f"beliefs={step.beliefs} states={step.states}{tag}", file=err)

        best, record = optimize(model, available, cost, args.heuristic, args.reuse, args.seed,
                                args.oracle, args.max_obs, args.reuse_requires_full,
                                args.jobs, on_step=trace)
        settings = {"heuristic": args.heuristic, "reuse": args.reuse, "seed": args.seed,
                    "oracle": args.oracle, "max_obs": args.max_obs, "jobs": args.jobs,
                    "reuse_requires_full": args.reuse_requires_full,
                    "observable": sorted(available or model.predicates)}
        code = EXIT_OK if best is not None else EXIT_LOSE
    report = rep.build_report(args.command, model, cost, record, best, settings)
    text = rep.dumps(report)
    if args.output:
        with open(args.output, "w") as f:
            f.write(text)
    else:
        out.write(text)
    return code, report


def main(argv=None):
    parser = make_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] not in ("solve", "optimize", "-h", "--help"):
        argv.insert(0, "optimize")
    args = parser.parse_args(argv)
    try:
        code, _ = run(args)
    except UsageError as e:
        print(f"minobs: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelError, ValueError) as e:
        print(f"minobs: model error: {e}", file=sys.stderr)
        return EXIT_MODEL
    return code


if __name__ == "__main__":
    sys.exit(main())
