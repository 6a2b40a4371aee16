"""Command-line front end.

Data goes to stdout (CSV, JSON or DOT), diagnostics to stderr. Exit codes:
0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

import numpy as np

from . import dynamics, equilibrium, evaluation, problems
from .chain import load_json, model_from_dict, model_to_dict, parse_number, validate
from .errors import EqstopError, ParameterError
from .payoff import make_mean_variance, make_variance, payoff_from_dict


class UsageError(Exception):
    pass


def fmt(x) -> str:
    return f"{float(x):.12g}"


def _num(x):
    """Round to 12 significant digits for JSON output."""
    if isinstance(x, (bool, np.bool_)) or x is None:
        return None if x is None else bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(fmt(x))
    if isinstance(x, np.ndarray):
        return [_num(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _num(v) for k, v in x.items()}
    return x


def dump(obj) -> str:
    return json.dumps(_num(obj), indent=2, sort_keys=False) + "\n"


def parse_vector(text: str, n: int | None = None, what: str = "strategy") -> np.ndarray:
    try:
        v = np.array([parse_number(t) for t in text.split(",")], dtype=float)
    except ParameterError as exc:
        raise UsageError(f"bad {what} literal {text!r}: {exc}") from None
    if n is not None and v.size != n:
        raise UsageError(f"{what} has {v.size} entries, model has {n} states")
    return v


# --- model ingestion ------------------------------------------------------------

def load_instance(args):
    """``(model, payoff)`` from ``--model`` or ``--example``."""
    if bool(args.model) == bool(args.example):
        raise UsageError("give exactly one of --model or --example")
    if args.example:
        ex = problems.paper_example(args.example)
        model, payoff = ex.model, ex.payoff
        data = {}
    else:
        data = load_json(args.model)
        model = model_from_dict(data)
        payoff = payoff_from_dict(model, data["payoff"]) if "payoff" in data else None
    kind = getattr(args, "payoff", None)
    if kind == "variance":
        payoff = make_variance(model)
    elif kind == "mean_variance" or (args.gamma is not None and kind is None and payoff is None):
        if args.gamma is None:
            raise UsageError("--payoff mean_variance needs --gamma")
        payoff = make_mean_variance(model, args.gamma)
    if payoff is None:
        raise UsageError("model file has no payoff; pass --payoff (and --gamma)")
    return model, payoff


def export_instance(model, payoff) -> dict:
    out = model_to_dict(model)
    out["payoff"] = payoff.to_dict()
    return out


# --- commands ----------------------------------------------------------------------

def cmd_validate(args, out):
    if bool(args.model) == bool(args.example):
        raise UsageError("give exactly one of --model or --example")
    model = problems.paper_example(args.example).model if args.example else model_from_dict(load_json(args.model))
    rep = validate(model)
    out.write(dump({"valid": rep.valid, "absorbing": list(rep.absorbing), "problems": rep.problems}))
    return 0 if rep.valid else 1


def _vector_table(model, cols: dict) -> str:
    names = list(cols)
    lines = ["state,label," + ",".join(names)]
    for i, lab in enumerate(model.labels):
        lines.append(f"{i},{lab}," + ",".join(fmt(cols[c][i]) for c in names))
    return "\n".join(lines) + "\n"


def cmd_eval(args, out):
    model, pay = load_instance(args)
    p = parse_vector(args.strategy, model.n)
    if args.truncation:
        ev = evaluation.evaluate_series(model, pay, p, args.truncation)
    else:
        ev = evaluation.evaluate(model, pay, p)
    out.write(_vector_table(model, {"phi": ev.phi, "psi": ev.psi, "J": ev.J,
                                    "phi_next": ev.phi_next, "psi_next": ev.psi_next}))
    return 0


def cmd_k(args, out):
    model, pay = load_instance(args)
    p = parse_vector(args.strategy, model.n)
    q = parse_vector(args.q, 1, "q")[0]
    out.write(fmt(evaluation.k_value(model, pay, p, args.state, q)) + "\n")
    return 0


def cmd_best_response(args, out):
    model, pay = load_instance(args)
    br = equilibrium.best_response(model, pay, parse_vector(args.strategy, model.n),
                                   method="grid" if args.grid else None)
    lines = ["state,label,set,maximal,value,method"]
    for i, lab in enumerate(model.labels):
        s = " ".join(f"[{fmt(a)};{fmt(b)}]" for a, b in br.intervals[i])
        lines.append(f"{i},{lab},{s},{fmt(br.maximal[i])},{fmt(br.value[i])},{br.method[i]}")
    out.write("\n".join(lines) + "\n")
    return 0


def report_dict(rep: equilibrium.EquilibriumReport) -> dict:
    return {
        "is_equilibrium": rep.is_equilibrium,
        "gap": rep.gap,
        "condition_I_slack": rep.condition_I_slack,
        "condition_II_slack": rep.condition_II_slack,
        "condition_III_value": rep.condition_III_value,
        "second_order_ok": rep.second_order_ok,
        "equality_flags": [sorted(f) for f in rep.equality_flags],
        "vacuous": [int(i) for i in np.flatnonzero(rep.vacuous)],
        "J": rep.evaluation.J,
        "notes": rep.notes,
    }


def cmd_check(args, out):
    model, pay = load_instance(args)
    rep = equilibrium.check_equilibrium(model, pay, parse_vector(args.strategy, model.n))
    out.write(dump(report_dict(rep)))
    return 0


def cmd_characterize(args, out):
    model, pay = load_instance(args)
    res = equilibrium.check_characterizing(
        model, pay, parse_vector(args.phi, model.n, "phi"), parse_vector(args.psi, model.n, "psi"))
    out.write(dump({"holds": res.holds, "q_hat": res.q_hat, "max_gap": res.max_gap,
                    "recursion_gap": res.recursion_gap}))
    return 0


def cmd_enumerate(args, out):
    model, pay = load_instance(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        found = equilibrium.enumerate_pure(model, pay)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    lines = ["strategy," + ",".join(f"J_{lab}" for lab in model.labels)]
    for e in found:
        bits = "".join(str(int(v)) for v in e.strategy)
        lines.append(bits + "," + ",".join(fmt(v) for v in e.evaluation.J))
    out.write("\n".join(lines) + "\n")
    return 0


def cmd_purify(args, out):
    model, pay = load_instance(args)
    p = equilibrium.purify(model, pay, parse_vector(args.strategy, model.n))
    out.write(",".join(fmt(v) for v in p) + "\n")
    return 0


def trace_dict(tr: dynamics.AdjustmentTrace) -> dict:
    return {
        "termination": tr.termination,
        "steps": tr.steps,
        "cycle_entry": tr.cycle_entry,
        "cycle_length": tr.cycle_length,
        "limit": tr.limit,
        "limit_is_equilibrium": tr.limit_is_equilibrium,
        "note": tr.note,
        "iterates": tr.iterates,
        "deltas": tr.deltas,
    }


def cmd_myopic(args, out):
    model, pay = load_instance(args)
    tr = dynamics.myopic(model, pay, parse_vector(args.start, model.n), args.max_iter, args.tol)
    out.write(dump(trace_dict(tr)))
    return 0


def cmd_graph(args, out):
    model, pay = load_instance(args)
    g = dynamics.response_graph(model, pay)
    out.write(g.to_dot() if args.format == "dot" else g.to_csv())
    print(f"acyclic: {g.acyclic}; self-loops: {[g.labels[i] for i in g.self_loops]}; "
          f"mixed images: {len(g.flagged)}", file=sys.stderr)
    return 0


def cmd_stability(args, out):
    model, pay = load_instance(args)
    p = parse_vector(args.strategy, model.n)
    if args.kind == "strong":
        rep = dynamics.probe_strong_local(model, pay, p, eps=args.eps, samples=args.samples, seed=args.seed)
    elif args.kind == "local":
        rep = dynamics.probe_local(model, pay, p, eps=args.eps, samples=args.samples,
                                   max_iter=args.max_iter, seed=args.seed)
    else:
        rep = dynamics.probe_global(model, pay, p, starts=args.samples, seed=args.seed, max_iter=args.max_iter)
    out.write(dump(rep.to_dict()))
    return 0


def cmd_threshold_scan(args, out):
    if args.values:
        x = parse_vector(args.values, None, "values")
    elif args.n:
        x = problems.spacing_values(args.n, args.step)
    else:
        raise UsageError("give --values or --n")
    if args.emit_figure:
        rep = problems.threshold_H(x, args.gamma, args.emit_figure)
        out.write(problems.threshold_figure_csv(x, rep))
        return 0
    lines = ["b,i,x_i,H,J"]
    for rep in problems.threshold_scan(x, args.gamma):
        for i in range(1, x.size + 1):
            H = fmt(rep.H[i - 2]) if 2 <= i <= x.size - 1 else ""
            lines.append(f"{rep.b},{i},{fmt(x[i - 1])},{H},{fmt(rep.J[i - 1])}")
    out.write("\n".join(lines) + "\n")
    return 0


def cmd_variance_walk(args, out):
    sol = problems.variance_walk(args.M)
    if args.emit_figure:
        out.write(sol.figure_csv())
        return 0
    out.write(dump({"M": sol.M, "strategy": sol.strategy, "phi": sol.phi, "psi": sol.psi, "J": sol.J,
                    "phi_next": sol.phi_next, "psi_next": sol.psi_next}))
    return 0


def cmd_simulate(args, out):
    model, pay = load_instance(args)
    p = parse_vector(args.strategy, model.n)
    r = evaluation.simulate(model, pay, p, args.state, args.paths, args.seed)
    x = model.index(args.state)
    ev = evaluation.evaluate(model, pay, p)
    out.write(dump({"state": x, "paths": r.paths, "seed": r.seed, "phi_hat": r.phi_hat, "phi_se": r.phi_se,
                    "psi_hat": r.psi_hat, "psi_se": r.psi_se, "phi_exact": ev.phi[x], "psi_exact": ev.psi[x]}))
    return 0


def cmd_example(args, out):
    ex = problems.paper_example(args.name)
    if not args.run_all_checks:
        out.write(dump(export_instance(ex.model, ex.payoff)))
        return 0
    results = ex.run_all_checks()
    out.write(dump({
        "example": ex.name,
        "annotations": ex.annotations,
        "reconstructed": ex.reconstructed,
        "checks": [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results],
        "all_passed": all(r.passed for r in results),
    }))
    return 0 if all(r.passed for r in results) else 1


# --- parser ----------------------------------------------------------------------------

def _source(p, payoff=True):
    p.add_argument("--model", help="JSON model file")
    p.add_argument("--example", help="canned example name, e.g. ex5_1 or variance_walk(3)")
    if payoff:
        p.add_argument("--payoff", choices=["mean_variance", "variance"], help="override the payoff")
        p.add_argument("--gamma", type=float, help="risk aversion for the mean-variance payoff")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eqstop", description="Equilibrium stopping strategies on finite Markov chains")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check the absorbing-chain invariants")
    _source(p, payoff=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("eval", help="phi, psi and J of a strategy")
    _source(p)
    p.add_argument("--strategy", required=True)
    p.add_argument("--truncation", type=int, help="use the truncated series instead of the exact solve")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("k", help="value of a one-shot deviation")
    _source(p)
    p.add_argument("--strategy", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--q", required=True)
    p.set_defaults(func=cmd_k)

    p = sub.add_parser("best-response", help="best-response sets per state")
    _source(p)
    p.add_argument("--strategy", required=True)
    p.add_argument("--grid", action="store_true", help="force the generic grid search")
    p.set_defaults(func=cmd_best_response)

    p = sub.add_parser("check", help="equilibrium verification report")
    _source(p)
    p.add_argument("--strategy", required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("characterize", help="test a solution of the characterizing equation")
    _source(p)
    p.add_argument("--phi", required=True)
    p.add_argument("--psi", required=True)
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("enumerate", help="all pure equilibria")
    _source(p)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("purify", help="pure equilibrium equivalent to a mixed one")
    _source(p)
    p.add_argument("--strategy", required=True)
    p.set_defaults(func=cmd_purify)

    p = sub.add_parser("myopic", help="run the myopic adjustment process")
    _source(p)
    p.add_argument("--start", required=True)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--tol", type=float, default=dynamics.TAU_CONV)
    p.set_defaults(func=cmd_myopic)

    p = sub.add_parser("graph", help="response graph over pure strategies")
    _source(p)
    p.add_argument("--format", choices=["dot", "csv"], default="dot")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("stability", help="sampled stability probes")
    p.add_argument("kind", choices=["strong", "local", "global"])
    _source(p)
    p.add_argument("--strategy", required=True)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--samples", type=int, default=200, help="samples (or random starts for global)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=500)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("threshold-scan", help="feasible mean-variance thresholds on a skip-free walk")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--values", help="comma-separated increasing state values starting at 0")
    p.add_argument("--n", type=int, help="generate values with x_{i+1} - x_i = i * step")
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--emit-figure", type=int, metavar="B", help="emit (i, x_i, H, J) for threshold B")
    p.set_defaults(func=cmd_threshold_scan)

    p = sub.add_parser("variance-walk", help="closed-form variance-problem equilibrium")
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--emit-figure", action="store_true", help="emit (i, x_i, J) as CSV")
    p.set_defaults(func=cmd_variance_walk)

    p = sub.add_parser("simulate", help="Monte Carlo estimate of phi and psi")
    _source(p)
    p.add_argument("--strategy", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("example", help="export or check a canned example")
    p.add_argument("name")
    p.add_argument("--run-all-checks", action="store_true")
    p.set_defaults(func=cmd_example)
    return ap


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (EqstopError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
