"""Finite absorbing Markov chains: construction, validation, hitting
probabilities and geometric killing."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import IllPosedError, ModelError, ParameterError

ROW_SUM_TOL = 1e-12
CEMETERY_LABEL = "cemetery"


@dataclass(frozen=True)
class State:
    label: str
    value: float


@dataclass(frozen=True, eq=False)
class MarkovModel:
    """Immutable finite Markov chain with numeric state values.

    Construction only checks shapes; use :func:`validate` (or
    :func:`require_valid`) for the absorbing-chain invariants.
    """

    states: tuple[State, ...]
    transition: np.ndarray
    cemetery: int | None = None

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] != len(self.states):
            raise ParameterError(
                f"transition must be {len(self.states)}x{len(self.states)}, got shape {P.shape}"
            )
        P.setflags(write=False)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "transition", P)

    @classmethod
    def from_arrays(cls, values, transition, labels=None, cemetery=None) -> MarkovModel:
        values = [float(v) for v in values]
        if labels is None:
            labels = [f"x{i + 1}" for i in range(len(values))]
        return cls(tuple(State(str(l), v) for l, v in zip(labels, values)), transition, cemetery)

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def values(self) -> np.ndarray:
        return np.array([s.value for s in self.states], dtype=float)

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.states]

    @property
    def absorbing(self) -> np.ndarray:
        """Indices ``i`` with ``P[i, i] == 1`` exactly."""
        return np.flatnonzero(np.diag(self.transition) == 1.0)

    @property
    def absorbing_mask(self) -> np.ndarray:
        return np.diag(self.transition) == 1.0

    @property
    def transient(self) -> np.ndarray:
        return np.flatnonzero(~self.absorbing_mask)

    def index(self, key) -> int:
        """Resolve a state given as an index or a label."""
        if isinstance(key, (int, np.integer)):
            if not 0 <= key < self.n:
                raise ParameterError(f"state index {key} out of range 0..{self.n - 1}")
            return int(key)
        labels = self.labels
        if key in labels:
            return labels.index(key)
        try:
            return self.index(int(key))
        except ValueError:
            raise ParameterError(f"unknown state {key!r}") from None


@dataclass
class ValidationReport:
    problems: list[str] = field(default_factory=list)
    absorbing: tuple[int, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.problems

    def __bool__(self) -> bool:
        return self.valid


@dataclass(frozen=True)
class HittingQuery:
    source: int
    target: frozenset
    avoid: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "target", frozenset(int(t) for t in self.target))
        object.__setattr__(self, "avoid", frozenset(int(a) for a in self.avoid))
        if self.target & self.avoid:
            raise ParameterError("target and avoid sets must be disjoint")


def _support_reaches(P: np.ndarray, goal: np.ndarray) -> np.ndarray:
    """Boolean mask of states from which some state in ``goal`` is reachable
    on the support graph of ``P`` (edge iff probability > 0)."""
    n = P.shape[0]
    reach = np.array(goal, dtype=bool)
    preds = [np.flatnonzero(P[:, j] > 0) for j in range(n)]
    queue = deque(np.flatnonzero(reach))
    while queue:
        j = queue.popleft()
        for i in preds[j]:
            if not reach[i]:
                reach[i] = True
                queue.append(i)
    return reach


def validate(model: MarkovModel) -> ValidationReport:
    """Check every invariant of an absorbing chain and report all violations."""
    P = model.transition
    report = ValidationReport()
    if model.n < 1:
        report.problems.append("empty state space")
        return report
    labels = model.labels
    if len(set(labels)) != len(labels):
        dup = sorted({l for l in labels if labels.count(l) > 1})
        report.problems.append(f"duplicate state labels: {dup}")
    if not np.all(np.isfinite(P)):
        report.problems.append("transition contains non-finite entries")
        return report
    if np.any(P < 0) or np.any(P > 1):
        bad = np.argwhere((P < 0) | (P > 1))
        report.problems.append(f"transition entries outside [0,1] at {bad[:5].tolist()}")
    sums = P.sum(axis=1)
    bad_rows = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
    for i in bad_rows:
        report.problems.append(f"row {i} ({labels[i]}) sums to {sums[i]!r}, not 1")
    absorbing = model.absorbing
    report.absorbing = tuple(int(a) for a in absorbing)
    if absorbing.size == 0:
        report.problems.append("no absorbing state")
    else:
        reach = _support_reaches(P, model.absorbing_mask)
        stuck = np.flatnonzero(~reach)
        if stuck.size:
            report.problems.append(
                "no absorbing state reachable from " + ", ".join(labels[i] for i in stuck)
            )
    return report


def require_valid(model: MarkovModel) -> None:
    report = validate(model)
    if not report.valid:
        raise ModelError("invalid model: " + "; ".join(report.problems))


def hit_probability(model: MarkovModel, query: HittingQuery) -> float:
    """Probability of entering ``query.target`` before ``query.avoid``.

    Solves the harmonic system ``v = P v`` on the states reachable from the
    source without touching the boundary, with ``v = 1`` on the target and
    ``v = 0`` on the avoid set.
    """
    P = model.transition
    i = model.index(query.source)
    if i in query.target:
        return 1.0
    if i in query.avoid:
        return 0.0
    boundary = np.zeros(model.n, dtype=bool)
    boundary[list(query.target | query.avoid)] = True
    # states visited before the boundary
    inner = np.zeros(model.n, dtype=bool)
    inner[i] = True
    queue = deque([i])
    while queue:
        s = queue.popleft()
        for j in np.flatnonzero(P[s] > 0):
            if not boundary[j] and not inner[j]:
                inner[j] = True
                queue.append(j)
    sub = P.copy()
    sub[:, ~(inner | boundary)] = 0.0
    if not _support_reaches(sub, boundary)[inner].all():
        raise IllPosedError("ill-posed hitting query: boundary is not reached almost surely")
    idx = np.flatnonzero(inner)
    target = np.zeros(model.n)
    target[list(query.target)] = 1.0
    A = np.eye(idx.size) - P[np.ix_(idx, idx)]
    b = P[idx] @ (target * boundary)
    try:
        v = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise IllPosedError("ill-posed hitting query: singular harmonic system") from None
    return float(v[np.searchsorted(idx, i)])


def with_killing(model: MarkovModel, survival: float) -> MarkovModel:
    """Geometrically killed chain: each step survives with probability
    ``survival`` and otherwise jumps to an absorbing cemetery of value 0."""
    q = float(survival)
    if not 0.0 < q < 1.0:
        raise ParameterError(f"survival probability must lie in (0,1), got {survival}")
    n = model.n
    P = np.zeros((n + 1, n + 1))
    P[:n, :n] = q * model.transition
    P[:n, n] = 1.0 - q
    P[n, n] = 1.0
    states = model.states + (State(CEMETERY_LABEL, 0.0),)
    return MarkovModel(states, P, cemetery=n)


# --- JSON model files -------------------------------------------------------

def parse_number(x) -> float:
    """Decimal or rational literal (``"1/3"``) to float."""
    if isinstance(x, bool):
        raise ParameterError(f"not a number: {x!r}")
    if isinstance(x, (int, float)):
        return float(x)
    if isinstance(x, str):
        try:
            return float(Fraction(x.strip()))
        except (ValueError, ZeroDivisionError):
            raise ParameterError(f"not a number: {x!r}") from None
    raise ParameterError(f"not a number: {x!r}")


def model_from_dict(data: dict) -> MarkovModel:
    try:
        states = data["states"]
        rows = data["transition"]
    except (KeyError, TypeError):
        raise ParameterError("model needs 'states' and 'transition' keys") from None
    labels = [str(s["label"]) for s in states]
    values = [parse_number(s.get("value", 0.0)) for s in states]
    P = [[parse_number(x) for x in row] for row in rows]
    cemetery = data.get("cemetery")
    return MarkovModel.from_arrays(values, P, labels, cemetery)


def model_to_dict(model: MarkovModel) -> dict:
    out = {
        "states": [{"label": s.label, "value": s.value} for s in model.states],
        "transition": model.transition.tolist(),
    }
    if model.cemetery is not None:
        out["cemetery"] = model.cemetery
    return out


def load_json(path) -> dict:
    return json.loads(Path(path).read_text())
