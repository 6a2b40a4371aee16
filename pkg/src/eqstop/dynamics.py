"""Myopic adjustment ``p_{k+1} = Gamma_bar(p_k)``, the pure-strategy response
graph, and sampled stability probes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import MarkovModel, require_valid
from .equilibrium import (
    TAU_EQ, argmax_sets, best_response, check_equilibrium, convex_codes, enumerate_pure,
    pure_strategies,
)
from .errors import CapacityError, ParameterError, PreconditionError
from .evaluation import as_strategy, evaluate, evaluate_batch, is_pure
from .payoff import PayoffSpec

TAU_CONV = 1e-12
CYCLE_QUANTUM = 1e-12
GRAPH_LIMIT = 20
CORNER_LIMIT = 4096
CERTIFICATE = "sampled certificate (not a proof)"


def gamma_bar(model: MarkovModel, payoff: PayoffSpec, strategy) -> np.ndarray:
    """Element-wise maximal best response to ``strategy``."""
    return best_response(model, payoff, strategy).maximal


def _key(p: np.ndarray) -> tuple:
    if is_pure(p):
        return tuple(p.astype(np.int8).tolist())
    return tuple(np.round(p / CYCLE_QUANTUM).astype(np.int64).tolist())


@dataclass
class AdjustmentTrace:
    """Iterates of the myopic process and how it ended.

    ``termination`` is ``"converged"``, ``"cycle"`` or ``"max_iter"``. A
    converged trace whose limit fails the equilibrium check is flagged in
    ``note`` rather than reported as an equilibrium.
    """

    iterates: list
    deltas: list
    termination: str
    cycle_entry: int | None = None
    cycle_length: int | None = None
    limit_is_equilibrium: bool | None = None
    note: str = ""

    @property
    def steps(self) -> int:
        return len(self.iterates) - 1

    @property
    def limit(self) -> np.ndarray | None:
        return self.iterates[-1] if self.termination == "converged" else None

    @property
    def cycle(self) -> list:
        if self.termination != "cycle":
            return []
        return self.iterates[self.cycle_entry:self.cycle_entry + self.cycle_length]


def myopic(model: MarkovModel, payoff: PayoffSpec, start, max_iter: int = 1000,
           tol: float = TAU_CONV) -> AdjustmentTrace:
    """Iterate ``Gamma_bar`` from ``start``.

    Stops on a sup-norm change of at most ``tol`` (then verifies the limit),
    on the recurrence of an iterate (quantised at 1e-12, exact for pure
    strategies), or after ``max_iter`` applications.
    """
    if max_iter < 1:
        raise ParameterError("max_iter must be at least 1")
    require_valid(model)
    p = as_strategy(start, model.n)
    iterates, deltas = [p], []
    seen = {_key(p): 0}
    for _ in range(max_iter):
        q = gamma_bar(model, payoff, p)
        delta = float(np.max(np.abs(q - p)))
        deltas.append(delta)
        if delta <= tol:
            ok = check_equilibrium(model, payoff, p).is_equilibrium
            note = "" if ok else "fixed point within tolerance, equilibrium check failed"
            return AdjustmentTrace(iterates, deltas, "converged", limit_is_equilibrium=ok, note=note)
        iterates.append(q)
        k = _key(q)
        if k in seen:
            entry = seen[k]
            return AdjustmentTrace(iterates, deltas, "cycle", entry, len(iterates) - 1 - entry)
        seen[k] = len(iterates) - 1
        p = q
    return AdjustmentTrace(iterates, deltas, "max_iter")


# --- response graph -----------------------------------------------------------

def _bits(p: np.ndarray) -> str:
    return "".join("1" if v == 1 else "0" for v in p)


@dataclass
class ResponseGraph:
    """Functional graph ``p -> Gamma_bar(p)`` on pure strategies.

    Nodes are indexed by the bits of the transient entries (first transient
    state most significant), which is also their lexicographic order.
    """

    nodes: np.ndarray
    successor: np.ndarray  # -1 where the image is mixed
    mixed_images: dict
    transient: np.ndarray

    @property
    def labels(self) -> list[str]:
        return [_bits(p) for p in self.nodes]

    @property
    def self_loops(self) -> list[int]:
        return [i for i, s in enumerate(self.successor) if s == i]

    @property
    def flagged(self) -> list[int]:
        return sorted(self.mixed_images)

    def cycles(self) -> list[list[int]]:
        """Cycles of length at least 2 in the pure-to-pure sub-graph."""
        n = len(self.successor)
        colour = np.zeros(n, dtype=np.int8)  # 0 new, 1 on current walk, 2 done
        found = []
        for s in range(n):
            walk = []
            v = s
            while v >= 0 and colour[v] == 0:
                colour[v] = 1
                walk.append(v)
                v = int(self.successor[v])
            if v >= 0 and colour[v] == 1:
                cyc = walk[walk.index(v):]
                if len(cyc) > 1:
                    found.append(cyc)
            for w in walk:
                colour[w] = 2
        return found

    @property
    def acyclic(self) -> bool:
        return not self.cycles()

    def to_dot(self) -> str:
        labels = self.labels
        lines = ["digraph response_graph {"]
        for i, lab in enumerate(labels):
            attr = ' [style=dashed, comment="mixed image"]' if i in self.mixed_images else ""
            lines.append(f'  "{lab}"{attr};')
        for i, s in enumerate(self.successor):
            if s >= 0:
                lines.append(f'  "{labels[i]}" -> "{labels[s]}";')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        labels = self.labels
        rows = ["source,target,kind"]
        for i, s in enumerate(self.successor):
            if s >= 0:
                rows.append(f"{labels[i]},{labels[s]},{'self' if s == i else 'edge'}")
            else:
                rows.append(f"{labels[i]},,mixed")
        return "\n".join(rows) + "\n"


def _batch_gamma_bar(model: MarkovModel, payoff: PayoffSpec, S: np.ndarray) -> np.ndarray:
    if not payoff.g.is_convex:
        return np.array([gamma_bar(model, payoff, s) for s in S])
    phi, psi = evaluate_batch(model, payoff, S)
    P = model.transition
    code, _ = convex_codes(payoff.f, phi @ P.T, payoff.h, psi @ P.T, payoff.g)
    out = np.where(code == 0, 0.0, 1.0)
    out[:, model.absorbing_mask] = 1.0
    return out


def response_graph(model: MarkovModel, payoff: PayoffSpec, limit: int = GRAPH_LIMIT) -> ResponseGraph:
    """Build the graph of ``Gamma_bar`` over all pure strategies."""
    require_valid(model)
    T = model.transient
    if T.size > limit:
        raise CapacityError(f"{T.size} transient states exceed the response-graph bound of {limit}")
    nodes = pure_strategies(model)
    images = _batch_gamma_bar(model, payoff, nodes)
    weights = 1 << np.arange(T.size - 1, -1, -1)
    successor = np.full(len(nodes), -1, dtype=np.int64)
    mixed = {}
    for i, img in enumerate(images):
        sub = img[T]
        if np.all((sub == 0) | (sub == 1)):
            successor[i] = int(sub.astype(np.int64) @ weights) if T.size else 0
        else:
            mixed[i] = img
    return ResponseGraph(nodes, successor, mixed, T)


# --- stability probes -----------------------------------------------------------

@dataclass
class ProbeReport:
    kind: str
    passed: bool
    epsilon: float | None
    samples: int
    seed: int
    n_pass: int
    n_fail: int
    failures: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    label: str = CERTIFICATE
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "passed": self.passed, "label": self.label,
            "epsilon": self.epsilon, "samples": self.samples, "seed": self.seed,
            "n_pass": self.n_pass, "n_fail": self.n_fail,
            "failures": [np.asarray(f).tolist() for f in self.failures[:20]],
            "note": self.note,
        }


def _require_equilibrium(model, payoff, p):
    rep = check_equilibrium(model, payoff, p)
    if not rep.is_equilibrium:
        raise PreconditionError("probe input is not an equilibrium")
    return rep.evaluation.J


def _perturb(p: np.ndarray, eps: float, movable: np.ndarray, rng) -> np.ndarray:
    """Uniform draw from the sup-norm ball of radius ``eps`` around ``p``
    intersected with the unit cube (a product of intervals)."""
    lo = np.maximum(p - eps, 0.0)
    hi = np.minimum(p + eps, 1.0)
    out = p.copy()
    out[movable] = rng.uniform(lo[movable], hi[movable])
    return out


def _equivalent_to(model, payoff, q, J, cache) -> bool:
    k = _key(q)
    if k not in cache:
        rep = check_equilibrium(model, payoff, q)
        cache[k] = rep.is_equilibrium and bool(np.all(np.abs(rep.evaluation.J - J) <= TAU_EQ))
    return cache[k]


def default_equivalents(model: MarkovModel, payoff: PayoffSpec, equilibrium) -> list:
    """The input plus every enumerated pure equilibrium with the same ``J``."""
    p = as_strategy(equilibrium, model.n)
    J = _require_equilibrium(model, payoff, p)
    out = [p]
    if model.transient.size <= GRAPH_LIMIT:
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for e in enumerate_pure(model, payoff):
                if np.all(np.abs(e.evaluation.J - J) <= TAU_EQ) and not np.array_equal(e.strategy, p):
                    out.append(e.strategy)
    return out


def probe_strong_local(model: MarkovModel, payoff: PayoffSpec, equilibrium, equivalents=None,
                       eps: float = 1e-4, samples: int = 200, seed: int = 0) -> ProbeReport:
    """Sampled test of strong local stability.

    For each perturbation ``p_eps`` of the equilibrium, some equivalent
    equilibrium (from ``equivalents``, or ``Gamma_bar(p_eps)`` itself) must be
    a best response to ``p_eps`` at every state.
    """
    p = as_strategy(equilibrium, model.n)
    J = _require_equilibrium(model, payoff, p)
    if equivalents is None:
        equivalents = default_equivalents(model, payoff, p)
    equivalents = [as_strategy(e, model.n) for e in equivalents]
    cache = {}
    for e in equivalents:
        if not _equivalent_to(model, payoff, e, J, cache):
            raise PreconditionError("supplied equivalents are not equivalent equilibria")
    if eps == 0:
        return ProbeReport("strong", True, 0.0, samples, seed, samples, 0, note="no perturbation")
    movable = model.transient
    failures = []
    for i in range(samples):
        rng = np.random.default_rng([seed, i])
        pe = _perturb(p, eps, movable, rng)
        ev = evaluate(model, payoff, pe)
        br = best_response(model, payoff, pe, ev)
        f, h, g = payoff.f, payoff.h, payoff.g
        ok = False
        for c in equivalents + [br.maximal]:
            Kc = c * f + (1 - c) * ev.phi_next + g(c * h + (1 - c) * ev.psi_next)
            if np.all(br.value - Kc <= TAU_EQ) and _equivalent_to(model, payoff, c, J, cache):
                ok = True
                break
        if not ok:
            failures.append(pe)
    n_fail = len(failures)
    note = "fail (within searched set)" if n_fail else ""
    return ProbeReport("strong", n_fail == 0, eps, samples, seed, samples - n_fail, n_fail, failures, note=note)


def _converges_to(model, payoff, trace, J) -> bool:
    if trace.termination != "converged" or not trace.limit_is_equilibrium:
        return False
    ev = evaluate(model, payoff, trace.limit)
    return bool(np.all(np.abs(ev.J - J) <= TAU_EQ))


def probe_local(model: MarkovModel, payoff: PayoffSpec, equilibrium, eps: float = 1e-3,
                samples: int = 50, max_iter: int = 500, seed: int = 0) -> ProbeReport:
    """Sampled test of local stability: myopic adjustment from each perturbed
    start must converge to an equilibrium with the same value function."""
    p = as_strategy(equilibrium, model.n)
    J = _require_equilibrium(model, payoff, p)
    if eps == 0:
        return ProbeReport("local", True, 0.0, samples, seed, samples, 0, note="no perturbation")
    failures, traces = [], []
    for i in range(samples):
        rng = np.random.default_rng([seed, i])
        start = _perturb(p, eps, model.transient, rng)
        tr = myopic(model, payoff, start, max_iter)
        traces.append(tr)
        if not _converges_to(model, payoff, tr, J):
            failures.append(start)
    n_fail = len(failures)
    note = "unstable: myopic adjustment did not return" if n_fail else ""
    return ProbeReport("local", n_fail == 0, eps, samples, seed, samples - n_fail, n_fail,
                       failures, traces, note=note)


def probe_global(model: MarkovModel, payoff: PayoffSpec, equilibrium, starts: int = 100,
                 seed: int = 0, max_iter: int = 500) -> ProbeReport:
    """Multi-start myopic adjustment from every pure corner (when there are at
    most 4096) and ``starts`` uniformly random strategies."""
    p = as_strategy(equilibrium, model.n)
    J = _require_equilibrium(model, payoff, p)
    points = []
    if 2 ** model.n <= CORNER_LIMIT:
        import itertools

        points.extend(np.array(c, dtype=float) for c in itertools.product((0.0, 1.0), repeat=model.n))
    for i in range(starts):
        points.append(np.random.default_rng([seed, i]).random(model.n))
    failures, traces = [], []
    for start in points:
        tr = myopic(model, payoff, start, max_iter)
        traces.append(tr)
        if not _converges_to(model, payoff, tr, J):
            failures.append(start)
    n_fail = len(failures)
    return ProbeReport("global", n_fail == 0, None, len(points), seed, len(points) - n_fail,
                       n_fail, failures, traces)


__all__ = [
    "AdjustmentTrace", "ProbeReport", "ResponseGraph", "argmax_sets", "default_equivalents",
    "gamma_bar", "myopic", "probe_global", "probe_local", "probe_strong_local", "response_graph",
]
