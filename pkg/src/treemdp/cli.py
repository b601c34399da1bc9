"""Command line interface.

Exit codes: 0 ok, 1 validation failure, 2 parse or usage error, 3 resource guard.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import experiments
from .llps import K_MAX, solve
from .model import (
    InstanceError,
    ResourceGuardError,
    case_study_tree,
    load_instance,
    random_instance,
    validate_instance,
)
from .oracle import EXHAUSTIVE_MAX_N, exact_total_reward, exhaustive_search

EXIT_OK, EXIT_INVALID, EXIT_PARSE, EXIT_GUARD = 0, 1, 2, 3


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _load(path):
    try:
        return load_instance(path)
    except OSError as exc:
        raise _Fail(EXIT_PARSE, f"cannot read {path}: {exc}") from exc
    except InstanceError as exc:
        raise _Fail(EXIT_PARSE, f"{path}: {exc}") from exc


def _load_valid(path):
    inst = _load(path)
    report = validate_instance(inst)
    if not report.ok:
        raise _Fail(EXIT_INVALID, str(report))
    return inst


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def cmd_validate(args):
    report = validate_instance(_load(args.instance))
    print(report)
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_solve(args):
    if args.k < 1:
        raise _Fail(EXIT_PARSE, "--k must be at least 1")
    if args.k > K_MAX:
        raise _Fail(EXIT_GUARD, f"--k {args.k} exceeds the limit of {K_MAX}")
    inst = _load_valid(args.instance)
    sol = solve(inst, args.k)
    _write_json(args.out, {
        "k": args.k,
        "policy": list(sol.profile),
        "approx_reward": sol.approx_reward,
        "exact_reward": exact_total_reward(inst, sol.profile),
        "stats": sol.stats.as_dict(include_time=False),
    })
    print(f"k={args.k} approx_reward={sol.approx_reward!r} "
          f"wall_time={sol.stats.wall_time:.3f}s", file=sys.stderr)
    return EXIT_OK


def cmd_exhaustive(args):
    inst = _load(args.instance)
    if inst.n > EXHAUSTIVE_MAX_N:
        raise _Fail(EXIT_GUARD,
                    f"exhaustive search refused: n={inst.n} > {EXHAUSTIVE_MAX_N}")
    inst = _load_valid(args.instance)
    profile, value = exhaustive_search(inst, workers=args.workers)
    _write_json(args.out, {"policy": list(profile), "reward": value})
    return EXIT_OK


def cmd_decay(args):
    try:
        result = experiments.run_decay(args.nodes, args.runs, args.kmax, args.seed,
                                       uniform=args.uniform)
    except ValueError as exc:
        raise _Fail(EXIT_PARSE, str(exc)) from exc
    experiments.write_decay_csv(args.csv, result)
    for k, m in result.medians.items():
        print(f"k={k} median gap={m:.3e}")
    slopes = [s for s in result.slopes.values() if s is not None]
    neg = sum(1 for s in slopes if s < 0)
    print(f"{neg}/{len(result.slopes)} runs with negative log-gap slope")
    return EXIT_OK


def cmd_casestudy(args):
    if args.instance:
        inst = _load_valid(args.instance)
    else:
        inst = random_instance(case_study_tree(), args.seed)
    if inst.n > EXHAUSTIVE_MAX_N:
        raise _Fail(EXIT_GUARD, f"case study needs n <= {EXHAUSTIVE_MAX_N}")
    k_max = args.kmax if args.kmax is not None else inst.tree.max_depth
    if not 1 <= k_max <= K_MAX:
        raise _Fail(EXIT_GUARD, f"--kmax must be in 1..{K_MAX}")
    rows = experiments.run_casestudy(inst, k_max)
    experiments.write_casestudy_csv(args.csv, rows)
    for r in rows:
        label = r.algorithm if r.k is None else f"{r.algorithm} k={r.k}"
        print(f"{label:<14} reward={r.reward:.4f} gap={r.gap:.4f} time={r.time_s:.4f}s")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="treemdp",
        description="Local policy search for multi-agent MDPs on trees.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check ergodicity of an instance")
    p.add_argument("instance")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="run LLPS with horizon k")
    p.add_argument("instance")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("exhaustive", help="exact optimum by enumeration")
    p.add_argument("instance")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_exhaustive)

    p = sub.add_parser("decay", help="truncation-gap experiment on a line")
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--kmax", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", required=True)
    p.add_argument("--uniform", action="store_true",
                   help="use the all-1/2 instance in every run")
    p.set_defaults(func=cmd_decay)

    p = sub.add_parser("casestudy", help="exhaustive search vs LLPS for k=1..kmax")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--instance")
    src.add_argument("--seed", type=int, default=0)
    p.add_argument("--kmax", type=int, default=None,
                   help="largest k (default: tree depth)")
    p.add_argument("--csv", required=True)
    p.set_defaults(func=cmd_casestudy)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ResourceGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())
