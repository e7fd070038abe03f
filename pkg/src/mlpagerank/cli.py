"""Command-line interface: solve, perturb, ingest, compare.

Exit codes: 0 tolerance reached, 2 iteration limit, 3 numerical failure,
64 usage error.  All numeric output is printed with 17 significant digits
and every CSV starts with a schema comment line, so byte-identical reruns
are reproducible from (config, seed).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import analysis, ingest, precision
from . import tensor as tz
from .solvers import Method, Problem, SolverOptions, Start, Termination, solve

EXIT_OK = 0
EXIT_MAXIT = 2
EXIT_NUMERICAL = 3
EXIT_USAGE = 64

CSV_SCHEMA = "mlpagerank-csv-v1"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def _fmt(x):
    return f"{float(x):.17g}"


def _add_instance_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin", choices=["intro", "ex1", "ex2"],
                     help="built-in instance")
    src.add_argument("--tensor", metavar="FILE",
                     help="stochastic tensor in the text format")
    src.add_argument("--graph", metavar="FILE",
                     help="MatrixMarket adjacency; tensor built via three-cycles")
    p.add_argument("--v-file", metavar="FILE",
                   help="teleport vector, one value per line (with --tensor)")
    p.add_argument("--v-seed", type=int, default=0,
                   help="seed for the heavy-tailed v (with --graph)")
    p.add_argument("--nu", type=float, default=0.1,
                   help="three-cycle mixing weight (with --graph)")
    p.add_argument("--delta", type=float, default=1e-6,
                   help="delta for the intro builtin")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--one-minus-two-alpha", type=float, default=None,
                   help="exact 1-2*alpha for alpha near 1/2")


def _load_problem(args, parser):
    if not 0.0 < args.alpha < 1.0:
        parser.error(f"alpha must be in (0,1), got {args.alpha}")
    try:
        if args.builtin:
            return ingest.builtin(args.builtin, args.alpha, delta=args.delta,
                                  one_minus_two_alpha=args.one_minus_two_alpha)
        if args.tensor:
            P = tz.read_tensor_text(args.tensor)
            if args.v_file:
                with open(args.v_file, "r", encoding="utf-8") as fh:
                    v = np.array([float(line) for line in fh if line.strip()])
            else:
                v = np.full(P.n, 1.0 / P.n)
            return Problem.from_pagerank(v, P, args.alpha,
                                         one_minus_two_alpha=args.one_minus_two_alpha)
        adj = ingest.read_matrix_market(args.graph)
        v = ingest.random_teleport_vector(adj.n, args.v_seed)
        P = ingest.build_pagerank_tensor(adj, v, args.nu)
        return Problem.from_pagerank(v, P, args.alpha,
                                     one_minus_two_alpha=args.one_minus_two_alpha)
    except (ValueError, OSError) as exc:
        parser.error(str(exc))


_METHODS = {m.value: m for m in Method}


def _parse_method(name, parser):
    try:
        return _METHODS[name]
    except KeyError:
        parser.error(f"unknown method {name!r}; choose from {sorted(_METHODS)}")


def _parse_blocks(text):
    if text is None:
        return None
    return tuple(int(t) for t in text.split(","))


def _termination_exit(termination):
    if termination is Termination.TOL_REACHED:
        return EXIT_OK
    if termination is Termination.MAXIT:
        return EXIT_MAXIT
    return EXIT_NUMERICAL


def _report_dict(report, problem):
    out = {
        "method": report.method.value,
        "iterations": report.iterations,
        "termination": report.termination.value,
        "final_residual": report.final_residual,
        "x": [float(t) for t in report.x],
        "residual_history": [float(t) for t in report.residual_history],
    }
    if report.z_history is not None:
        out["z_history"] = [float(t) for t in report.z_history]
    if report.e_cw_history is not None:
        out["e_cw_final"] = float(report.e_cw_history[-1])
        out["e_norm_final"] = float(report.e_norm_history[-1])
    if report.max_overshoot is not None:
        out["max_overshoot"] = report.max_overshoot
    if problem.is_pagerank:
        out["alpha"] = problem.alpha
    return out


def _write_iteration_csv(path, report):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {CSV_SCHEMA} solve\n")
        fh.write("k,residual_inf,e_cw,e_norm\n")
        n_rows = len(report.residual_history)
        for k in range(n_rows):
            e_cw = (
                _fmt(report.e_cw_history[k])
                if report.e_cw_history is not None
                else ""
            )
            e_norm = (
                _fmt(report.e_norm_history[k])
                if report.e_norm_history is not None
                else ""
            )
            fh.write(f"{k},{_fmt(report.residual_history[k])},{e_cw},{e_norm}\n")


def cmd_solve(args, parser):
    problem = _load_problem(args, parser)
    method = _parse_method(args.method, parser)
    opts = SolverOptions(
        method=method,
        tol=args.tol,
        maxit=args.maxit,
        block_sizes=_parse_blocks(args.block_sizes),
        start=Start.V if args.start == "v" else Start.ZERO,
        record_history=True,
    )
    reference = None
    ref_info = None
    if args.reference:
        mode = precision.STOCHASTIC if args.start == "v" else precision.MINIMAL
        ref = precision.reference_solution(problem, mode)
        if not ref.converged:
            sys.stderr.write("error: extended-precision reference did not converge\n")
            return EXIT_NUMERICAL
        reference = ref.x
        ref_info = {
            "reference_residual": ref.residual_norm,
            "reference_iterations": ref.iterations,
            "reference_decimal": ref.decimal_strings(),
        }
    try:
        report = solve(problem, opts, reference=reference)
    except ValueError as exc:
        parser.error(str(exc))
    payload = _report_dict(report, problem)
    if ref_info:
        payload.update(ref_info)
    if args.out_json:
        analysis.dump_json(payload, args.out_json)
    if args.out_csv:
        _write_iteration_csv(args.out_csv, report)
    print(json.dumps({k: payload[k] for k in
                      ("method", "iterations", "termination", "final_residual", "x")}))
    return _termination_exit(report.termination)


def cmd_perturb(args, parser):
    problem = _load_problem(args, parser)
    method = _parse_method(args.method, parser)
    opts = SolverOptions(method=method, tol=args.tol, maxit=args.maxit,
                         block_sizes=_parse_blocks(args.block_sizes))
    if args.reference:
        m = precision.reference_solution(problem, precision.MINIMAL).x
    else:
        m = solve(problem, opts).x
    y = analysis.compute_y(problem, m)
    kap = analysis.kappa(m, y)
    ome = analysis.omega(problem, m)
    n = problem.n
    rows = []
    max_ratio = 0.0
    for trial in range(args.trials):
        seed = args.seed + trial
        pert = analysis.zero_sum_perturb(problem, args.epsilon, seed)
        eps_real = analysis.realized_epsilon(pert, problem) if args.epsilon else 0.0
        if args.reference:
            m_t = precision.reference_solution(pert, precision.MINIMAL).x
        else:
            m_t = solve(pert, opts).x
        d_obs = analysis.cw_distance(m_t, m).value
        rk = analysis.bound_kappa(eps_real, kap, n)
        ro = analysis.bound_omega(eps_real, ome, n)
        if ro.applicable and ro.bound > 0.0:
            max_ratio = max(max_ratio, d_obs / ro.bound)
        rows.append((trial, eps_real, d_obs, ro, rk))
    if args.out_csv:
        with open(args.out_csv, "w", encoding="utf-8") as fh:
            fh.write(f"# {CSV_SCHEMA} perturb\n")
            fh.write("trial,epsilon_realized,d_cw_observed,bound_omega,"
                     "bound_kappa,applicable_omega,applicable_kappa\n")
            for trial, eps_real, d_obs, ro, rk in rows:
                fh.write(
                    f"{trial},{_fmt(eps_real)},{_fmt(d_obs)},{_fmt(ro.bound)},"
                    f"{_fmt(rk.bound)},{int(ro.applicable)},{int(rk.applicable)}\n"
                )
    last = rows[-1]
    summary = analysis.perturbation_record(last[1], rows[-1][4], rows[-1][3], last[2])
    summary.update({
        "trials": args.trials,
        "epsilon_input": args.epsilon,
        "max_observed_over_bound": max_ratio,
        "all_within_bound": bool(max_ratio <= 1.0),
    })
    if args.out_json:
        analysis.dump_json(summary, args.out_json)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_ingest(args, parser):
    try:
        adj = ingest.read_matrix_market(args.graph)
        v = ingest.random_teleport_vector(adj.n, args.v_seed)
        if not 0.0 <= args.nu <= 1.0:
            parser.error(f"nu must be in [0, 1], got {args.nu}")
        cycles = ingest.three_cycle_tensor(adj)
        P = ingest.build_pagerank_tensor(adj, v, args.nu)
    except (ValueError, OSError) as exc:
        parser.error(str(exc))
    if cycles.nnz == 0:
        sys.stderr.write("warning: graph has no directed three-cycles\n")
    tz.write_tensor_text(P, args.out_tensor)
    if args.out_v:
        with open(args.out_v, "w", encoding="utf-8") as fh:
            for value in v:
                fh.write(f"{value!r}\n")
    rep = tz.check_stochastic(P, target=1.0, tol=1e-13)
    payload = {
        "n": adj.n,
        "edges": adj.edge_count,
        "three_cycle_entries": cycles.nnz,
        "tensor_entries": P.nnz,
        "stochastic_ok": rep.ok,
        "max_column_deviation": rep.max_deviation,
    }
    if args.out_report:
        analysis.dump_json(payload, args.out_report)
    print(json.dumps(payload))
    return EXIT_OK


def cmd_compare(args, parser):
    problem = _load_problem(args, parser)
    methods = [_parse_method(name.strip(), parser)
               for name in args.methods.split(",")]
    stochastic = args.stochastic
    mode = precision.STOCHASTIC if stochastic else precision.MINIMAL
    ref = precision.reference_solution(problem, mode)
    if not ref.converged:
        sys.stderr.write("error: extended-precision reference did not converge\n")
        return EXIT_NUMERICAL
    start = Start.V if stochastic else Start.ZERO
    rows = []
    worst = EXIT_OK
    for method in methods:
        opts = SolverOptions(method=method, tol=args.tol, maxit=args.maxit,
                             block_sizes=_parse_blocks(args.block_sizes),
                             start=start, record_history=True)
        try:
            report = solve(problem, opts, reference=ref.x)
        except ValueError as exc:
            parser.error(str(exc))
        worst = max(worst, _termination_exit(report.termination))
        for k in range(len(report.residual_history)):
            rows.append((
                method.value, k,
                report.e_cw_history[k], report.e_norm_history[k],
                report.residual_history[k],
            ))
        print(json.dumps({
            "method": method.value,
            "iterations": report.iterations,
            "termination": report.termination.value,
            "e_cw_final": float(report.e_cw_history[-1]),
            "e_norm_final": float(report.e_norm_history[-1]),
        }))
    if args.out_csv:
        with open(args.out_csv, "w", encoding="utf-8") as fh:
            fh.write(f"# {CSV_SCHEMA} compare\n")
            fh.write("method,k,e_cw,e_norm,residual_inf\n")
            for method, k, e_cw, e_norm, res in rows:
                fh.write(f"{method},{k},{_fmt(e_cw)},{_fmt(e_norm)},{_fmt(res)}\n")
    return worst


def build_parser():
    parser = _Parser(prog="mlpagerank",
                     description="Componentwise-accurate multilinear PageRank solvers")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one method on one instance")
    _add_instance_args(p_solve)
    p_solve.add_argument("--method", default="newton-gth")
    p_solve.add_argument("--tol", type=float, default=1e-15)
    p_solve.add_argument("--maxit", type=int, default=500)
    p_solve.add_argument("--block-sizes", default=None,
                         help="comma-separated block sizes for Jacobi methods")
    p_solve.add_argument("--start", choices=["zero", "v"], default="zero")
    p_solve.add_argument("--reference", action="store_true",
                         help="attach extended-precision error columns")
    p_solve.add_argument("--out-json", default=None)
    p_solve.add_argument("--out-csv", default=None)
    p_solve.set_defaults(fn=cmd_solve)

    p_pert = sub.add_parser("perturb", help="zero-sum perturbation experiment")
    _add_instance_args(p_pert)
    p_pert.add_argument("--epsilon", type=float, required=True)
    p_pert.add_argument("--trials", type=int, default=100)
    p_pert.add_argument("--seed", type=int, default=0)
    p_pert.add_argument("--method", default="newton-gth")
    p_pert.add_argument("--tol", type=float, default=1e-15)
    p_pert.add_argument("--maxit", type=int, default=500)
    p_pert.add_argument("--block-sizes", default=None)
    p_pert.add_argument("--reference", action="store_true",
                        help="solve perturbed instances in extended precision")
    p_pert.add_argument("--out-json", default=None)
    p_pert.add_argument("--out-csv", default=None)
    p_pert.set_defaults(fn=cmd_perturb)

    p_ing = sub.add_parser("ingest", help="graph -> stochastic tensor pipeline")
    p_ing.add_argument("--graph", required=True)
    p_ing.add_argument("--nu", type=float, default=0.1)
    p_ing.add_argument("--v-seed", type=int, default=0)
    p_ing.add_argument("--out-tensor", required=True)
    p_ing.add_argument("--out-v", default=None)
    p_ing.add_argument("--out-report", default=None)
    p_ing.set_defaults(fn=cmd_ingest)

    p_cmp = sub.add_parser("compare", help="methods vs extended reference")
    _add_instance_args(p_cmp)
    p_cmp.add_argument("--methods", required=True,
                       help="comma-separated method names")
    p_cmp.add_argument("--tol", type=float, default=1e-15)
    p_cmp.add_argument("--maxit", type=int, default=500)
    p_cmp.add_argument("--block-sizes", default=None)
    p_cmp.add_argument("--stochastic", action="store_true",
                       help="start from v, reference the stochastic solution")
    p_cmp.add_argument("--out-csv", default=None)
    p_cmp.set_defaults(fn=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.fn(args, parser)


if __name__ == "__main__":
    sys.exit(main())
