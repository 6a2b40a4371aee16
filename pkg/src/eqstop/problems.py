"""Closed-form special cases and the canned worked examples.

* Mean-variance stopping on a symmetric skip-free walk with a threshold
  strategy: the sign pattern of ``H(x_i, b)`` decides whether the threshold
  ``b`` is an equilibrium.
* The variance problem on a walk absorbed at 0 and reflected at ``M``, with
  equilibrium ``(1, 0, ..., 0, 1/(M+1))``.
* A registry of named instances, each carrying machine-checkable claims.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .chain import MarkovModel
from .dynamics import gamma_bar, myopic, probe_global, probe_local
from .equilibrium import (
    best_response, check_characterizing, check_equilibrium, enumerate_pure, equivalent, purify,
)
from .errors import ParameterError, PreconditionError
from .evaluation import evaluate
from .payoff import (
    PayoffSpec, make_mean_variance, make_payoff, make_variance, shifted_positive_part_g,
)

H_SIGN_TOL = 1e-12


# --- skip-free walks and the threshold ansatz -----------------------------------------

def _symmetric_walk(values, labels=None) -> MarkovModel:
    n = len(values)
    P = np.zeros((n, n))
    P[0, 0] = P[-1, -1] = 1.0
    for i in range(1, n - 1):
        P[i, i - 1] = P[i, i + 1] = 0.5
    return MarkovModel.from_arrays(values, P, labels)


def skipfree_model(values) -> MarkovModel:
    """Symmetric nearest-neighbour walk on increasing ``values`` with both ends
    absorbing."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise ParameterError("need at least 3 states")
    if np.any(np.diff(x) <= 0):
        raise ParameterError("state values must be strictly increasing")
    if x[0] != 0:
        raise ParameterError(f"the lowest state value must be 0, got {x[0]}")
    return _symmetric_walk(x)


def spacing_values(n: int, step: float = 0.1) -> np.ndarray:
    """``x_1 = 0`` and ``x_{i+1} - x_i = i * step``."""
    i = np.arange(1, n + 1)
    return step * (i - 1) * i / 2


def threshold_strategy(n: int, b: int) -> np.ndarray:
    """Continue on ``x_2..x_{b-1}``, stop from ``x_b`` up (1-based ``b``)."""
    p = np.ones(n)
    p[1:b - 1] = 0.0
    return p


@dataclass
class ThresholdReport:
    b: int
    H: np.ndarray  # H(x_i, b) for i = 2..N-1
    feasible: bool
    J: np.ndarray | None = None
    H_generic: np.ndarray | None = None

    @property
    def max_route_gap(self) -> float:
        if self.H_generic is None:
            return float("nan")
        return float(np.max(np.abs(self.H - self.H_generic)))


def _check_threshold_args(x, gamma, b):
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 3:
        raise ParameterError("need at least 3 states")
    if not 2 <= b <= n - 1:
        raise ParameterError(f"threshold b must lie in 2..{n - 1}, got {b}")
    if not gamma > 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    return x, n


def threshold_H_closed(values, gamma: float, b: int) -> np.ndarray:
    """Explicit three-case formula for ``H(x_i, b)``, ``i = 2..N-1`` (1-based)."""
    x, n = _check_threshold_args(values, gamma, b)
    H = np.empty(n - 2)
    xb, xb1 = x[b - 1], x[b]
    w = (b - 2) / (b - 1)
    for i in range(2, n):
        if i < b:
            r = (i - 1) / (b - 1)
            H[i - 2] = xb * r * (1 - gamma * xb * (1 - r)) - x[i - 1]
        elif i == b:
            H[i - 2] = (xb1 * (1 - gamma * xb1) / 2 + xb * (1 - gamma * xb) / 2 * w
                        + gamma * (xb1 + xb * w) ** 2 / 4 - xb)
        else:
            lo, hi = x[i - 2], x[i]
            H[i - 2] = (hi + lo) / 2 - gamma / 4 * (hi - lo) ** 2 - x[i - 1]
    return H


def threshold_H_generic(values, gamma: float, b: int):
    """``H`` from an exact evaluation of the threshold strategy:
    ``E[phi(X_1)] + g(E[psi(X_1)]) - f(x) - g(h(x))``. Also returns ``J``."""
    x, n = _check_threshold_args(values, gamma, b)
    model = skipfree_model(x)
    pay = make_mean_variance(model, gamma)
    ev = evaluate(model, pay, threshold_strategy(n, b))
    g = pay.g
    H = ev.phi_next + g(ev.psi_next) - pay.f - g(pay.h)
    return H[1:-1], ev.J


def threshold_H(values, gamma: float, b: int) -> ThresholdReport:
    """Sign test for the threshold strategy ``b``: ``H >= 0`` below ``b`` and
    ``H <= 0`` from ``b`` up (up to 1e-12)."""
    H = threshold_H_closed(values, gamma, b)
    Hg, J = threshold_H_generic(values, gamma, b)
    idx = np.arange(2, H.size + 2)
    below = idx < b
    feasible = bool(np.all(H[below] >= -H_SIGN_TOL) and np.all(H[~below] <= H_SIGN_TOL))
    return ThresholdReport(b, H, feasible, J if feasible else None, Hg)


def threshold_value(values, report: ThresholdReport) -> np.ndarray:
    """Equilibrium value ``0`` at ``x_1``, ``H + x_i`` below ``b``, ``x_i`` from ``b`` up."""
    x = np.asarray(values, dtype=float)
    J = x.copy()
    J[0] = 0.0
    for i in range(2, report.b):
        J[i - 1] = report.H[i - 2] + x[i - 1]
    return J


def threshold_scan(values, gamma: float) -> list[ThresholdReport]:
    """Every feasible threshold, with its equilibrium value vector."""
    x = np.asarray(values, dtype=float)
    out = []
    for b in range(2, x.size):
        rep = threshold_H(x, gamma, b)
        if rep.feasible:
            rep.J = threshold_value(x, rep)
            out.append(rep)
    return out


def threshold_figure_csv(values, report: ThresholdReport) -> str:
    """Rows ``(i, x_i, H, J)``; ``H`` is blank at the absorbing ends."""
    x = np.asarray(values, dtype=float)
    J = threshold_value(x, report)
    buf = io.StringIO()
    buf.write("i,x_i,H,J\n")
    for i in range(1, x.size + 1):
        H = f"{report.H[i - 2]:.12g}" if 2 <= i <= x.size - 1 else ""
        buf.write(f"{i},{x[i - 1]:.12g},{H},{J[i - 1]:.12g}\n")
    return buf.getvalue()


# --- the variance walk -------------------------------------------------------------

def variance_walk_model(M: int) -> MarkovModel:
    """Symmetric walk on ``0..M``, absorbed at 0, reflected at ``M``."""
    if M < 1:
        raise ParameterError(f"M must be at least 1, got {M}")
    n = M + 1
    P = np.zeros((n, n))
    P[0, 0] = 1.0
    for i in range(1, M):
        P[i, i - 1] = P[i, i + 1] = 0.5
    P[M, M - 1] = 1.0
    return MarkovModel.from_arrays(np.arange(n), P, [f"x{i}" for i in range(n)])


@dataclass
class VarianceWalkSolution:
    M: int
    model: MarkovModel
    payoff: PayoffSpec
    strategy: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    J: np.ndarray
    phi_next: np.ndarray
    psi_next: np.ndarray

    def figure_csv(self) -> str:
        buf = io.StringIO()
        buf.write("i,x_i,J\n")
        for i, v in enumerate(self.J):
            buf.write(f"{i},{i},{v:.12g}\n")
        return buf.getvalue()


def variance_walk(M: int, verify: bool = True) -> VarianceWalkSolution:
    """Closed-form equilibrium of the variance problem on ``0..M``:
    ``phi(x_i) = iM/2``, ``psi(x_i) = i/2``, ``J(x_i) = iM/2 - (i/2)^2``."""
    model = variance_walk_model(M)
    pay = make_variance(model)
    i = np.arange(M + 1, dtype=float)
    p = np.zeros(M + 1)
    p[0] = 1.0
    p[M] = 1.0 / (M + 1)
    phi = i * M / 2
    psi = i / 2
    J = phi - psi ** 2
    phi_next, psi_next = phi.copy(), psi.copy()
    phi_next[M] = (M - 1) * M / 2
    psi_next[M] = (M - 1) / 2
    sol = VarianceWalkSolution(M, model, pay, p, phi, psi, J, phi_next, psi_next)
    if verify:
        rep = check_equilibrium(model, pay, p)
        assert rep.is_equilibrium, "closed-form variance-walk strategy failed the equilibrium check"
        assert abs(rep.condition_III_value[M]) <= 1e-10, "first-order condition does not bind at x_M"
    return sol


# --- the example registry ------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class Example:
    """A fully specified instance with the results claimed for it.

    ``reconstructed`` lists claims that pin down chain details only implied
    by the printed numbers; they are verified like every other claim.
    """

    name: str
    model: MarkovModel
    payoff: PayoffSpec
    annotations: dict
    reconstructed: list = field(default_factory=list)
    checks: dict = field(default_factory=dict, repr=False)

    def run_all_checks(self) -> list[CheckResult]:
        out = []
        for key, fn in self.checks.items():
            try:
                ok, detail = fn()
            except (AssertionError, PreconditionError, ParameterError) as exc:
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            out.append(CheckResult(key, bool(ok), detail))
        return out


def _close(a, b, tol):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    err = float(np.max(np.abs(a - b)))
    return err <= tol, f"max error {err:.3g}"


def ex5_1() -> Example:
    model = skipfree_model([0.0, 1.0, 2.0, 3.0])
    pay = make_payoff(model, np.zeros(4), [0.0, 0.0, 1.0, 2.0], shifted_positive_part_g(1.0))
    p_hat = np.array([1.0, 0.5, 0.0, 1.0])
    candidates = {(1, 0, 0, 1): 4 / 3, (1, 0, 1, 1): 1.0, (1, 1, 0, 1): 1.0, (1, 1, 1, 1): 1.0}
    ann = {
        "equilibrium": p_hat.tolist(),
        "psi": [0, 2 / 7, 8 / 7, 2],
        "pure_candidates_psi3": {"".join(map(str, k)): v for k, v in candidates.items()},
        "purify": "refused: g convex but not strictly convex",
    }

    def c_psi():
        return _close(evaluate(model, pay, p_hat).psi, [0, 2 / 7, 8 / 7, 2], 1e-12)

    def c_eq():
        return check_equilibrium(model, pay, p_hat).is_equilibrium, ""

    def c_flat():
        br = best_response(model, pay, p_hat)
        return br.intervals[1] == [(0.0, 1.0)] and br.maximal[1] == 1.0, str(br.intervals[1])

    def c_candidates():
        J_hat = evaluate(model, pay, p_hat).J
        worst = 0.0
        for s, v in candidates.items():
            ev = evaluate(model, pay, s)
            worst = max(worst, abs(ev.psi[2] - v))
            rep = check_equilibrium(model, pay, s)
            if rep.is_equilibrium and np.all(np.abs(rep.evaluation.J - J_hat) <= 1e-9):
                return False, f"{s} is equivalent"
        return worst <= 1e-12, f"max psi(3) error {worst:.3g}"

    def c_purify():
        try:
            purify(model, pay, p_hat)
        except PreconditionError:
            return True, "refused"
        return False, "purify accepted a convex g"

    checks = {"psi": c_psi, "equilibrium": c_eq, "flat_response_x2": c_flat,
              "no_equivalent_pure": c_candidates, "purify_refused": c_purify}
    return Example("ex5_1", model, pay, ann, [], checks)


def ex_two_equilibria(gamma: float = 3.0) -> Example:
    model = MarkovModel.from_arrays([1.0, 2.0], [[0.5, 0.5], [0.0, 1.0]])
    pay = make_mean_variance(model, gamma)
    ann = {
        "gamma": gamma,
        "one_step_phi_at_x1_under_stop": -5 * gamma / 2,
        "one_step_psi_at_x1": 1.5,
    }
    if gamma == 3.0:
        ann["equilibria"] = {"11": [1.0, 2.0], "01": [2.0, 2.0]}

    def c_recon():
        ev = evaluate(model, pay, [1.0, 1.0])
        return _close([ev.phi_next[0], ev.psi_next[0]], [-5 * gamma / 2, 1.5], 1e-12)

    checks = {"reconstruction": c_recon}
    if gamma == 3.0:
        def c_values():
            ok = True
            errs = []
            for s, J in (([1, 1], [1, 2]), ([0, 1], [2, 2])):
                rep = check_equilibrium(model, pay, s)
                good, d = _close(rep.evaluation.J, J, 1e-12)
                ok &= rep.is_equilibrium and good
                errs.append(d)
            return ok, "; ".join(errs)

        def c_enum():
            found = [e.strategy.tolist() for e in enumerate_pure(model, pay)]
            return sorted(found) == [[0.0, 1.0], [1.0, 1.0]], str(found)

        def c_equiv():
            return not equivalent(model, pay, [1, 1], [0, 1]), ""

        checks.update({"equilibria": c_values, "enumerate": c_enum, "not_equivalent": c_equiv})
    return Example("ex_two_equilibria", model, pay, ann, ["reconstruction"], checks)


NO_EQ_CYCLE = [(1, 1, 1, 1), (1, 0, 1, 1), (1, 0, 0, 1), (1, 1, 0, 1)]


def no_equilibrium_numbers(model: MarkovModel, pay: PayoffSpec) -> list[float]:
    """The eight printed intermediate values along the 4-cycle, in print order."""
    g = pay.g
    out = []
    ev = evaluate(model, pay, NO_EQ_CYCLE[0])
    out += [ev.phi_next[1], ev.psi_next[1], ev.phi_next[1] + g(ev.psi_next[1])]
    ev = evaluate(model, pay, NO_EQ_CYCLE[1])
    out += [ev.phi_next[2], ev.psi_next[2], ev.phi_next[2] + g(ev.psi_next[2])]
    ev = evaluate(model, pay, NO_EQ_CYCLE[2])
    out += [ev.phi[1], ev.psi[1], ev.J[1]]
    ev = evaluate(model, pay, NO_EQ_CYCLE[3])
    out += [ev.phi[2], ev.psi[2], ev.J[2]]
    return [float(v) for v in out]


NO_EQ_PRINTED = [-0.3211, 0.545, 0.5210, -0.6310, 0.7575, 0.7003, -0.4150, 0.5833, 0.5086,
                 -0.6057, 0.7450, 0.6944]


def ex_no_equilibrium() -> Example:
    model = _symmetric_walk([0.39, 0.52, 0.70, 0.97])
    pay = make_mean_variance(model, 1.0)
    ann = {"equilibria": [], "cycle": [list(c) for c in NO_EQ_CYCLE], "printed": NO_EQ_PRINTED}

    def c_numbers():
        return _close(no_equilibrium_numbers(model, pay), NO_EQ_PRINTED, 1e-4)

    def c_enum():
        found = enumerate_pure(model, pay)
        return not found, f"{len(found)} found"

    def c_cycle():
        for k, s in enumerate(NO_EQ_CYCLE):
            tr = myopic(model, pay, s)
            expect = NO_EQ_CYCLE[k:] + NO_EQ_CYCLE[:k]
            got = [tuple(int(v) for v in q) for q in tr.cycle]
            if tr.termination != "cycle" or got != expect:
                return False, f"from {s}: {tr.termination} {got}"
        return True, "length 4 from every member"

    checks = {"reconstruction": c_numbers, "no_pure_equilibrium": c_enum, "cycle": c_cycle}
    return Example("ex_no_equilibrium", model, pay, ann, ["reconstruction"], checks)


def ex_global_stable() -> Example:
    model = MarkovModel.from_arrays([0.0, 1.0], [[1.0, 0.0], [0.5, 0.5]], ["x0", "x1"])
    pay = make_variance(model)
    ann = {"gamma_bar": "(1, (1 - p2) / 2)", "equilibrium": [1.0, 1 / 3]}

    def c_map():
        rng = np.random.default_rng(0)
        worst = 0.0
        for p in rng.random((100, 2)):
            worst = max(worst, float(np.max(np.abs(gamma_bar(model, pay, p) - [1.0, (1 - p[1]) / 2]))))
        return worst <= 1e-12, f"max error {worst:.3g}"

    def c_global():
        rep = probe_global(model, pay, [1.0, 1 / 3], starts=100, seed=0)
        return rep.passed, f"{rep.n_pass}/{rep.samples} starts converged"

    checks = {"reconstruction": c_map, "global_stability": c_global}
    return Example("ex_global_stable", model, pay, ann, ["reconstruction"], checks)


def meanvar18() -> Example:
    x = spacing_values(18)
    model = skipfree_model(x)
    pay = make_mean_variance(model, 0.07)
    ann = {"gamma": 0.07, "N": 18, "feasible_threshold": 16}

    def c_scan():
        bs = [r.b for r in threshold_scan(x, 0.07)]
        return 16 in bs, f"feasible b = {bs}"

    def c_eq():
        return check_equilibrium(model, pay, threshold_strategy(18, 16)).is_equilibrium, ""

    def c_routes():
        worst = max(threshold_H(x, 0.07, b).max_route_gap for b in range(2, 18))
        return worst <= 1e-10, f"max closed/generic gap {worst:.3g}"

    checks = {"threshold_16": c_scan, "equilibrium": c_eq, "closed_vs_generic": c_routes}
    return Example("meanvar18", model, pay, ann, [], checks)


def variance_walk_example(M: int = 3) -> Example:
    sol = variance_walk(M, verify=False)
    model, pay = sol.model, sol.payoff
    ann = {"M": M, "equilibrium": sol.strategy.tolist(), "J": sol.J.tolist()}

    def c_eq():
        rep = check_equilibrium(model, pay, sol.strategy)
        good, d = _close(rep.evaluation.J, sol.J, 1e-10)
        return rep.is_equilibrium and good, d

    def c_char():
        return check_characterizing(model, pay, sol.phi, sol.psi).holds, ""

    checks = {"equilibrium": c_eq, "characterizing": c_char}
    if M == 3:
        def c_unstable():
            rep = probe_local(model, pay, sol.strategy, eps=1e-3, samples=10, seed=0)
            return not rep.passed, rep.note

        checks["not_locally_stable"] = c_unstable
    return Example(f"variance_walk({M})", model, pay, ann, [], checks)


EXAMPLES: dict[str, Callable[..., Example]] = {
    "ex5_1": ex5_1,
    "ex_two_equilibria": ex_two_equilibria,
    "ex_no_equilibrium": ex_no_equilibrium,
    "ex_global_stable": ex_global_stable,
    "meanvar18": meanvar18,
    "variance_walk": variance_walk_example,
}


def paper_example(name: str, param: float | None = None) -> Example:
    """Look up a canned instance; ``name`` may carry its parameter inline,
    as in ``"ex_two_equilibria(3)"`` or ``"variance_walk(100)"``."""
    base = name.strip()
    if base.endswith(")") and "(" in base:
        base, arg = base[:-1].split("(", 1)
        param = float(arg)
    if base not in EXAMPLES:
        raise ParameterError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}")
    if param is None:
        return EXAMPLES[base]()
    if base == "variance_walk":
        if param != int(param):
            raise ParameterError("M must be an integer")
        return EXAMPLES[base](int(param))
    if base == "ex_two_equilibria":
        return EXAMPLES[base](param)
    raise ParameterError(f"example {base!r} takes no parameter")


__all__ = [
    "CheckResult", "Example", "EXAMPLES", "ThresholdReport", "VarianceWalkSolution",
    "no_equilibrium_numbers", "paper_example", "skipfree_model", "spacing_values",
    "threshold_H", "threshold_H_closed", "threshold_H_generic", "threshold_scan",
    "threshold_strategy", "threshold_figure_csv", "threshold_value", "variance_walk",
    "variance_walk_model",
]
