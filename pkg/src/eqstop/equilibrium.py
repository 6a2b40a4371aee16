"""Best responses, equilibrium verification, pure-strategy enumeration and
purification.

At a state ``x`` the one-shot deviation value is

    K(x, q, p) = q f(x) + (1-q) E_x[phi_p(X_1)] + g(q h(x) + (1-q) E_x[psi_p(X_1)])

and ``p`` is an equilibrium iff ``p_x`` maximises ``q -> K(x, q, p)`` over
``[0, 1]`` at every state.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .chain import MarkovModel, require_valid
from .errors import CapacityError, PreconditionError
from .evaluation import Evaluation, as_strategy, evaluate, evaluate_batch, is_pure
from .payoff import GDescriptor, PayoffSpec, zero_g, make_payoff

TAU_EQ = 1e-9
TAU_BR = 1e-10
GRID_POINTS = 4097
GOLDEN_TOL = 1e-12
SINGLETON_WIDTH = 1e-9
ENUMERATION_LIMIT = 30
_EPS = np.finfo(float).eps
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _k(c1, c2, c3, c4, g, q):
    return q * c1 + (1 - q) * c2 + g(q * c3 + (1 - q) * c4)


# --- per-shape argmax routines ----------------------------------------------

def convex_codes(c1, c2, c3, c4, g):
    """Vectorised argmax of a convex ``q -> K`` over ``[0, 1]``.

    Returns ``(code, value)`` with code 0 -> {0}, 1 -> {1}, 2 -> [0, 1],
    3 -> {0} and {1}. A convex function with equal endpoint values is constant
    iff it also attains that value inside, which the three interior probes test.
    """
    K0 = c2 + g(c4)
    K1 = c1 + g(c3)
    top = np.maximum(K0, K1)
    inner = np.minimum.reduce([_k(c1, c2, c3, c4, g, q) for q in (0.25, 0.5, 0.75)])
    tie = np.abs(K0 - K1) <= TAU_BR
    flat = tie & (inner >= top - TAU_BR)
    code = np.where(K1 > K0, 1, 0)
    code = np.where(tie, np.where(flat, 2, 3), code)
    return code, top


def _concave_state(c1, c2, c3, c4, g):
    """Argmax of a concave, differentiable ``q -> K`` by bisection on the sign
    of ``dK/dq = (c1 - c2) + g'(q c3 + (1-q) c4) (c3 - c4)``."""
    slope = c1 - c2
    spread = c3 - c4

    def d(q):
        return slope + g.prime(q * c3 + (1 - q) * c4) * spread

    gmax = max(abs(g.prime(c3)), abs(g.prime(c4)))
    delta = 64 * _EPS * (abs(c1) + abs(c2) + gmax * (abs(c3) + abs(c4)))

    def last_true(pred):
        # pred is monotone true -> false on [0, 1]
        if not pred(0.0):
            return None
        if pred(1.0):
            return 1.0
        lo, hi = 0.0, 1.0
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if pred(mid):
                lo = mid
            else:
                hi = mid
        return lo

    crossing = last_true(lambda q: d(q) > 0)
    if crossing is None:
        q_star = 0.0
    elif crossing == 1.0:
        q_star = 1.0
    else:
        q_star = crossing
    a = last_true(lambda q: d(q) > delta)
    a = 0.0 if a is None else a
    b = last_true(lambda q: d(q) >= -delta)
    b = 0.0 if b is None else b
    a, b = min(a, q_star), max(b, q_star)
    value = float(_k(c1, c2, c3, c4, g, q_star))
    if b - a <= SINGLETON_WIDTH:
        return [(q_star, q_star)], value
    return [(a, b)], value


def _golden_max(fun, lo, hi):
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = fun(x1), fun(x2)
    while b - a > GOLDEN_TOL:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = fun(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = fun(x2)
    q = 0.5 * (a + b)
    return q, fun(q)


def _grid_state(c1, c2, c3, c4, g):
    """Argmax for arbitrary continuous ``g``: uniform grid, then golden-section
    refinement around every near-optimal plateau. Plateaus wider than one grid
    point are reported at grid resolution."""
    q = np.linspace(0.0, 1.0, GRID_POINTS)
    K = _k(c1, c2, c3, c4, g, q)
    top = float(K.max())
    near = np.flatnonzero(K >= top - TAU_BR)
    runs = np.split(near, np.flatnonzero(np.diff(near) > 1) + 1)
    fun = lambda t: float(_k(c1, c2, c3, c4, g, t))  # noqa: E731
    found = []
    for run in runs:
        i0, i1 = run[0], run[-1]
        lo, hi = q[max(i0 - 1, 0)], q[min(i1 + 1, GRID_POINTS - 1)]
        qb, kb = _golden_max(fun, lo, hi)
        if K[i0] > kb and i0 == i1:
            qb, kb = q[i0], float(K[i0])
        if i0 == i1:
            found.append(((qb, qb), kb))
        else:
            found.append(((min(q[i0], qb), max(q[i1], qb)), max(kb, float(K[run].max()))))
    best = max(top, max(v for _, v in found))
    intervals = [iv for iv, v in found if v >= best - TAU_BR]
    return intervals, best


# --- best responses -----------------------------------------------------------

@dataclass
class BestResponseSet:
    """Per-state argmax of ``q -> K(x, q, p)`` as sorted closed intervals."""

    intervals: list[list[tuple[float, float]]]
    maximal: np.ndarray
    value: np.ndarray
    method: list[str]

    def contains(self, x: int, q: float, tol: float = 1e-12) -> bool:
        return any(a - tol <= q <= b + tol for a, b in self.intervals[x])

    @property
    def split_states(self) -> list[int]:
        """States whose argmax is the two-point set {0, 1} (not an interval)."""
        return [i for i, iv in enumerate(self.intervals) if len(iv) > 1]


def _method_for(g: GDescriptor) -> str:
    if g.shape == "affine":
        return "affine"
    if g.is_convex:
        return "convex"
    if g.shape == "concave" and g.differentiability >= 1:
        return "concave"
    return "grid"


def argmax_sets(c1, c2, c3, c4, g: GDescriptor, vacuous=None, method: str | None = None) -> BestResponseSet:
    """Maximisers of ``q c1 + (1-q) c2 + g(q c3 + (1-q) c4)`` for each entry."""
    n = len(c1)
    method = method or _method_for(g)
    vacuous = np.zeros(n, dtype=bool) if vacuous is None else vacuous
    intervals: list = [None] * n
    value = np.empty(n)
    methods = [method] * n
    if method in ("affine", "convex"):
        code, top = convex_codes(c1, c2, c3, c4, g)
        shapes = {0: [(0.0, 0.0)], 1: [(1.0, 1.0)], 2: [(0.0, 1.0)], 3: [(0.0, 0.0), (1.0, 1.0)]}
        for i in range(n):
            intervals[i] = list(shapes[int(code[i])])
        value[:] = top
    else:
        solver = _concave_state if method == "concave" else _grid_state
        for i in range(n):
            if vacuous[i]:
                continue
            intervals[i], value[i] = solver(c1[i], c2[i], c3[i], c4[i], g)
    for i in np.flatnonzero(vacuous):
        intervals[i] = [(0.0, 1.0)]
        value[i] = float(_k(c1[i], c2[i], c3[i], c4[i], g, 1.0))
        methods[i] = "vacuous"
    maximal = np.array([iv[-1][1] for iv in intervals])
    return BestResponseSet(intervals, maximal, value, methods)


def best_response(model: MarkovModel, payoff: PayoffSpec, strategy, ev: Evaluation | None = None,
                  method: str | None = None) -> BestResponseSet:
    """Best-response set at every state against ``strategy``.

    ``method`` overrides the shape-based choice (``"grid"`` forces the generic
    search). Absorbing states get ``[0, 1]`` since ``K`` does not depend on ``q``
    there.
    """
    if ev is None:
        ev = evaluate(model, payoff, strategy)
    return argmax_sets(payoff.f, ev.phi_next, payoff.h, ev.psi_next, payoff.g,
                       vacuous=model.absorbing_mask, method=method)


# --- verification -------------------------------------------------------------

@dataclass
class EquilibriumReport:
    is_equilibrium: bool
    gap: np.ndarray
    condition_I_slack: np.ndarray
    condition_II_slack: np.ndarray
    condition_III_value: np.ndarray | None
    second_order_ok: dict | None
    equality_flags: list[set]
    vacuous: np.ndarray
    evaluation: Evaluation
    best_response: BestResponseSet
    notes: list[str] = field(default_factory=list)


def check_equilibrium(model: MarkovModel, payoff: PayoffSpec, strategy, tol: float = TAU_EQ) -> EquilibriumReport:
    """Verify the no-profitable-deviation condition at every state and report
    the first- and second-order necessary conditions alongside."""
    require_valid(model)
    p = as_strategy(strategy, model.n)
    ev = evaluate(model, payoff, p)
    br = best_response(model, payoff, p, ev)
    f, h, g = payoff.f, payoff.h, payoff.g
    at_p = _k(f, ev.phi_next, h, ev.psi_next, g, p)
    gap = np.maximum(br.value - at_p, 0.0)
    slack_I = ev.J - (f + g(h))
    slack_II = ev.J - (ev.phi_next + g(ev.psi_next))
    notes = []
    cond_III = second = None
    y = p * h + (1 - p) * ev.psi_next
    if g.differentiability >= 1:
        cond_III = (f - ev.phi_next) + g.prime(y) * (h - ev.psi_next)
    else:
        notes.append("condition III omitted: g is not differentiable")
    if g.differentiability >= 2:
        mixed = np.flatnonzero((p > 0) & (p < 1) & ~model.absorbing_mask)
        second = {int(i): bool(g.second(y[i]) <= tol) for i in mixed}
    else:
        notes.append("second-order condition omitted: g is not twice differentiable")
    flags = []
    for i in range(model.n):
        s = set()
        if abs(slack_I[i]) <= tol:
            s.add("I")
        if abs(slack_II[i]) <= tol:
            s.add("II")
        if cond_III is not None and abs(cond_III[i]) <= tol:
            s.add("III")
        flags.append(s)
    if br.split_states:
        notes.append("two-point best responses at states " + str(br.split_states))
    if "grid" in br.method:
        notes.append("best responses located on a grid; maximal elements are grid-accurate")
    return EquilibriumReport(
        bool(np.all(gap <= tol)), gap, slack_I, slack_II, cond_III, second, flags,
        model.absorbing_mask.copy(), ev, br, notes,
    )


@dataclass
class Characterization:
    holds: bool
    q_hat: np.ndarray
    max_gap: float
    recursion_gap: float


def check_characterizing(model: MarkovModel, payoff: PayoffSpec, phi, psi, tol: float = TAU_EQ) -> Characterization:
    """Test whether ``(phi, psi)`` solves the characterizing equation.

    When it does, ``q_hat`` (the maximal maximiser at each state) is an
    equilibrium with value ``phi + g(psi)``.
    """
    require_valid(model)
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    P = model.transition
    phi_next, psi_next = P @ phi, P @ psi
    f, h, g = payoff.f, payoff.h, payoff.g
    br = argmax_sets(f, phi_next, h, psi_next, g)
    q = br.maximal
    max_gap = float(np.max(np.abs(phi + g(psi) - br.value)))
    rec = max(
        float(np.max(np.abs(phi - (q * f + (1 - q) * phi_next)))),
        float(np.max(np.abs(psi - (q * h + (1 - q) * psi_next)))),
    )
    return Characterization(max_gap <= tol and rec <= tol, q, max_gap, rec)


def equivalent(model: MarkovModel, payoff: PayoffSpec, p, q, tol: float = TAU_EQ) -> bool:
    """Whether two equilibria share the same value function."""
    reports = [check_equilibrium(model, payoff, s) for s in (p, q)]
    for name, rep in zip("pq", reports):
        if not rep.is_equilibrium:
            raise PreconditionError(f"{name} is not an equilibrium")
    return bool(np.all(np.abs(reports[0].evaluation.J - reports[1].evaluation.J) <= tol))


# --- enumeration and purification ----------------------------------------------

@dataclass
class PureEquilibrium:
    strategy: np.ndarray
    evaluation: Evaluation


def pure_strategies(model: MarkovModel) -> np.ndarray:
    """All pure strategies over the transient states in lexicographic order;
    absorbing entries are fixed to 1."""
    T = model.transient
    out = np.ones((2 ** T.size, model.n))
    if T.size:
        out[:, T] = np.array(list(itertools.product((0.0, 1.0), repeat=T.size)))
    return out


def _pure_candidates(model: MarkovModel, payoff: PayoffSpec, S: np.ndarray) -> np.ndarray:
    """Mask of rows of ``S`` that pass the endpoint test (exact for convex g)."""
    phi, psi = evaluate_batch(model, payoff, S)
    P = model.transition
    phi_next, psi_next = phi @ P.T, psi @ P.T
    g = payoff.g
    _, top = convex_codes(payoff.f, phi_next, payoff.h, psi_next, g)
    J = phi + g(psi)
    return np.all(top - J <= TAU_EQ, axis=1)


def enumerate_pure(model: MarkovModel, payoff: PayoffSpec, limit: int = ENUMERATION_LIMIT) -> list[PureEquilibrium]:
    """Every pure equilibrium, in lexicographic order of the strategy vector.

    Complete for strictly convex or affine ``g``, where any equilibrium has an
    equivalent pure one; for other shapes only pure equilibria are found.
    """
    require_valid(model)
    k = model.transient.size
    if k > limit:
        raise CapacityError(f"{k} transient states exceed the enumeration bound of {limit}")
    if payoff.g.shape not in ("strictly_convex", "affine"):
        warnings.warn(
            f"g is {payoff.g.shape}: mixed equilibria may exist without a pure equivalent",
            stacklevel=2,
        )
    S = pure_strategies(model)
    if payoff.g.is_convex:
        S = S[_pure_candidates(model, payoff, S)]
    found = []
    for s in S:
        rep = check_equilibrium(model, payoff, s)
        if rep.is_equilibrium:
            found.append(PureEquilibrium(s, rep.evaluation))
    return found


def purify(model: MarkovModel, payoff: PayoffSpec, strategy) -> np.ndarray:
    """Raise every fractional entry of an equilibrium to 1.

    Only valid for strictly convex ``g``: there a mixed entry forces
    ``q -> K`` to be constant, so stopping outright changes no value.
    """
    if payoff.g.shape != "strictly_convex":
        raise PreconditionError(
            f"purification needs strictly convex g, got {payoff.g.shape}; with a merely "
            "convex g a mixed equilibrium can have no pure equivalent (e.g. g(y) = (y-1)+ "
            "on the 4-state symmetric walk)"
        )
    p = as_strategy(strategy, model.n)
    rep = check_equilibrium(model, payoff, p)
    if not rep.is_equilibrium:
        raise PreconditionError("input strategy is not an equilibrium")
    out = np.where((p > 0) & (p < 1), 1.0, p)
    after = check_equilibrium(model, payoff, out)
    assert after.is_equilibrium, "purified strategy failed the equilibrium check"
    assert np.all(np.abs(after.evaluation.J - rep.evaluation.J) <= TAU_EQ), "purification changed J"
    return out


# --- time-consistent oracle ---------------------------------------------------------

def optimal_stopping_value(model: MarkovModel, f, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Value of the classical problem ``sup_tau E[f(X_tau)]``.

    Value iteration ``V <- max(f, P V)`` from ``V = f`` until the sup-change is
    at most ``tol``, then polished by exactly evaluating the induced stopping
    rule (kept only if it satisfies the Bellman equation).
    """
    require_valid(model)
    f = np.asarray(f, dtype=float)
    P = model.transition
    V = f.copy()
    for _ in range(max_iter):
        nxt = np.maximum(f, P @ V)
        done = np.max(np.abs(nxt - V)) <= tol
        V = nxt
        if done:
            break
    rule = (f >= P @ V).astype(float)
    pay = make_payoff(model, f, np.zeros_like(f), zero_g())
    W = evaluate(model, pay, rule).phi
    scale = 1.0 + np.max(np.abs(W))
    if np.max(np.abs(W - np.maximum(f, P @ W))) <= 1e-12 * scale and np.max(np.abs(W - V)) <= 1e-6 * scale:
        return W
    return V


def optimal_stopping_rule(model: MarkovModel, f) -> np.ndarray:
    """Pure rule stopping wherever stopping attains the optimal value."""
    V = optimal_stopping_value(model, f)
    f = np.asarray(f, dtype=float)
    return (f >= V - 1e-12 * (1.0 + np.abs(V))).astype(float)


__all__ = [
    "BestResponseSet", "EquilibriumReport", "Characterization", "PureEquilibrium",
    "argmax_sets", "best_response", "check_equilibrium", "check_characterizing",
    "convex_codes", "enumerate_pure", "equivalent", "is_pure", "optimal_stopping_rule",
    "optimal_stopping_value", "pure_strategies", "purify", "TAU_EQ", "TAU_BR",
]
