"""Command-line interface: solve, generate, bench, and check subcommands."""

from __future__ import annotations

import argparse
import json
import sys

from .cbf import CbfSyntaxError, UnsupportedFeatureError, parse_cbf, to_cone_problem
from .driver import SolverConfig, solve
from .genbench import GenParams, generate, run_benchmark
from .jsonio import SchemaError, read_instance, read_triple, write_instance
from .model import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, SUBPROBLEM_FAILURE, kkt_error

EX_USAGE = 64
EX_IOERR = 66

_STATUS_EXIT = {OPTIMAL: 0, INFEASIBLE: 2, ITERATION_LIMIT: 3, SUBPROBLEM_FAILURE: 4}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EX_USAGE)


def _load_problem(path):
    if path.endswith(".cbf"):
        with open(path) as f:
            return to_cone_problem(parse_cbf(f.read())), None
    problem, triple, _ = read_instance(path)
    return problem, triple


def _cmd_solve(args):
    problem, _ = _load_problem(args.file)
    start = read_triple(args.warm_start) if args.warm_start else None
    sink = None
    trace_file = None
    if args.trace:
        trace_file = open(args.trace, "w")

        def sink(rec):
            trace_file.write(json.dumps(rec) + "\n")

    config = SolverConfig(
        tol=args.tol,
        max_iters=args.max_iters,
        enable_soc_step=args.enable_soc,
        trace_sink=sink,
    )
    try:
        report = solve(problem, start=start, config=config)
    finally:
        if trace_file:
            trace_file.close()
    print(f"status        {report.status}")
    print(f"objective     {report.objective:.12g}")
    print(f"kkt_error     {report.kkt_error:.6e}")
    print(f"iterations    {report.total_iters}")
    print(f"fast_steps    {report.sqp_step_iters}")
    print(f"newton_qps    {report.qp_newton_solves}")
    print(f"master_qps    {report.qp_master_solves}")
    print(f"final_rho     {report.final_rho:.6g}")
    if report.message:
        print(f"note          {report.message}")
    return _STATUS_EXIT.get(report.status, 4)


def _cmd_generate(args):
    params = GenParams(n=args.n, m=args.m, k0=args.k0, ki=args.ki, kb=args.kb,
                       density=args.density, seed=args.seed)
    inst = generate(params)
    write_instance(args.out, inst.problem, inst.planted, inst.activity,
                   gen_params={"n": args.n, "m": args.m, "k0": args.k0, "ki": args.ki,
                               "kb": args.kb, "density": args.density, "seed": args.seed})
    err = kkt_error(inst.problem, inst.planted.x, inst.planted.lam, inst.planted.bound_duals)
    print(f"wrote {args.out}  (planted kkt_error {err:.3e})")
    return 0


def _cmd_bench(args):
    sizes = []
    for spec in args.sizes.split(","):
        parts = spec.lower().split("x")
        if len(parts) != 3:
            print(f"bad size spec {spec!r}; expected NxMxK", file=sys.stderr)
            return EX_USAGE
        sizes.append(tuple(int(p) for p in parts))
    result = run_benchmark(args.suite, sizes, repeats=args.repeats, seed=args.seed,
                           level=args.level, density=args.density)
    print(result.to_text())
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(result.to_csv())
        print(f"wrote {args.csv}")
    return 0


def _cmd_check(args):
    problem, _ = _load_problem(args.file)
    triple = read_triple(args.triple)
    err = kkt_error(problem, triple.x, triple.lam, triple.bound_duals)
    print(f"kkt_error {err:.6e}")
    return 0


def main(argv=None):
    parser = _Parser(prog="socpsqp", description="Cutting-plane SQP solver for SOCPs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve an instance (.json or .cbf)")
    p.add_argument("file")
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--warm-start", metavar="TRIPLE_JSON")
    p.add_argument("--enable-soc", action="store_true")
    p.add_argument("--trace", metavar="OUT")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("generate", help="generate a random nondegenerate instance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--k0", type=int, required=True)
    p.add_argument("--ki", type=int, required=True)
    p.add_argument("--kb", type=int, required=True)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("bench", help="run a benchmark suite")
    p.add_argument("--suite", choices=["cold", "warm", "refine"], required=True)
    p.add_argument("--level", type=float, default=1e-3)
    p.add_argument("--sizes", default="200x60x10")
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("check", help="print the KKT error of a triple on an instance")
    p.add_argument("file")
    p.add_argument("triple")
    p.set_defaults(func=_cmd_check)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"cannot open {exc.filename}", file=sys.stderr)
        return EX_IOERR
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EX_IOERR
    except (SchemaError, CbfSyntaxError, UnsupportedFeatureError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_USAGE


if __name__ == "__main__":
    sys.exit(main())
