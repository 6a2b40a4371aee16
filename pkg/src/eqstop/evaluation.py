"""Values of mixed stopping strategies.

``evaluate`` is the exact route (dense linear solve); ``evaluate_series`` and
``simulate`` are independent oracles used for cross-validation.
"""

from __future__ import annotations

import contextlib
import contextvars
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .chain import MarkovModel, require_valid
from .errors import ParameterError
from .payoff import PayoffSpec

RECURSION_TOL = 1e-10
MAX_PATH_STEPS = 10_000_000
SHARD_PATHS = 8192
BLOCK_STEPS = 64

_recorder: contextvars.ContextVar[list | None] = contextvars.ContextVar("_recorder", default=None)


def as_strategy(p, n: int) -> np.ndarray:
    p = np.array(p, dtype=float).reshape(-1)
    if p.size != n:
        raise ParameterError(f"strategy has {p.size} entries, model has {n} states")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ParameterError("stopping probabilities must lie in [0,1]")
    return p


def is_pure(p) -> bool:
    p = np.asarray(p)
    return bool(np.all((p == 0) | (p == 1)))


@dataclass(frozen=True, eq=False)
class Evaluation:
    phi: np.ndarray
    psi: np.ndarray
    J: np.ndarray
    phi_next: np.ndarray
    psi_next: np.ndarray
    residual: float = 0.0
    tail_mass: np.ndarray | None = None
    strategy: np.ndarray | None = None
    payoff: PayoffSpec | None = None


@contextlib.contextmanager
def record_evaluations():
    """Collect every :class:`Evaluation` built by :func:`evaluate` inside the
    block (used to audit the one-step recursion across whole workflows)."""
    bucket: list = []
    token = _recorder.set(bucket)
    try:
        yield bucket
    finally:
        _recorder.reset(token)


def recursion_residual(payoff: PayoffSpec, p: np.ndarray, phi, psi, phi_next, psi_next) -> float:
    """Max violation of ``phi = p f + (1-p) E[phi(X_1)]`` and its ``psi`` twin."""
    r1 = phi - (p * payoff.f + (1 - p) * phi_next)
    r2 = psi - (p * payoff.h + (1 - p) * psi_next)
    return float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))


def _assemble(model, payoff, p, phi, psi, tail=None) -> Evaluation:
    P = model.transition
    phi_next = P @ phi
    psi_next = P @ psi
    res = recursion_residual(payoff, p, phi, psi, phi_next, psi_next)
    ev = Evaluation(phi, psi, phi + payoff.g(psi), phi_next, psi_next, res, tail, p, payoff)
    bucket = _recorder.get()
    if bucket is not None:
        bucket.append(ev)
    return ev


def _solve_values(model: MarkovModel, payoff: PayoffSpec, p: np.ndarray):
    P = model.transition
    T = model.transient
    A_ = model.absorbing
    phi = payoff.f.copy()
    psi = payoff.h.copy()
    if T.size:
        pT = p[T]
        keep = 1.0 - pT
        M = np.eye(T.size) - keep[:, None] * P[np.ix_(T, T)]
        ends = np.column_stack([payoff.f, payoff.h])
        rhs = pT[:, None] * ends[T] + keep[:, None] * (P[np.ix_(T, A_)] @ ends[A_])
        sol = np.linalg.solve(M, rhs)
        # one step of iterative refinement
        sol += np.linalg.solve(M, rhs - M @ sol)
        phi[T] = sol[:, 0]
        psi[T] = sol[:, 1]
    return phi, psi


def evaluate(model: MarkovModel, payoff: PayoffSpec, strategy) -> Evaluation:
    """Exact ``phi_p``, ``psi_p``, ``J_p`` and one-step expectations.

    On the transient states ``phi`` solves
    ``(I - D_{1-p} P_TT) phi_T = D_p f_T + D_{1-p} P_TA f_A``; absorbing states
    keep their own reward whatever ``p`` says there.
    """
    require_valid(model)
    p = as_strategy(strategy, model.n)
    phi, psi = _solve_values(model, payoff, p)
    ev = _assemble(model, payoff, p, phi, psi)
    scale = 1.0 + max(np.max(np.abs(phi)), np.max(np.abs(psi)))
    assert ev.residual <= RECURSION_TOL * scale, f"recursion residual {ev.residual}"
    return ev


def evaluate_batch(model: MarkovModel, payoff: PayoffSpec, strategies: np.ndarray, chunk: int = 4096):
    """``(phi, psi)`` for a stack of strategies, shape ``(B, N)`` each."""
    P = model.transition
    T = model.transient
    A_ = model.absorbing
    S = np.asarray(strategies, dtype=float)
    B = S.shape[0]
    phi = np.broadcast_to(payoff.f, (B, model.n)).copy()
    psi = np.broadcast_to(payoff.h, (B, model.n)).copy()
    if T.size == 0:
        return phi, psi
    PTT = P[np.ix_(T, T)]
    ends = np.column_stack([payoff.f, payoff.h])
    exit_ = P[np.ix_(T, A_)] @ ends[A_]
    eye = np.eye(T.size)
    for lo in range(0, B, chunk):
        pT = S[lo:lo + chunk][:, T]
        keep = 1.0 - pT
        M = eye - keep[:, :, None] * PTT
        rhs = pT[:, :, None] * ends[T] + keep[:, :, None] * exit_
        sol = np.linalg.solve(M, rhs)
        phi[lo:lo + chunk, T] = sol[..., 0]
        psi[lo:lo + chunk, T] = sol[..., 1]
    return phi, psi


def k_value(model: MarkovModel, payoff: PayoffSpec, strategy, x, q: float, ev: Evaluation | None = None) -> float:
    """Value at ``x`` of stopping now with probability ``q`` and following
    ``strategy`` afterwards."""
    if not 0.0 <= q <= 1.0:
        raise ParameterError(f"q must lie in [0,1], got {q}")
    i = model.index(x)
    if ev is None:
        ev = evaluate(model, payoff, strategy)
    y = q * payoff.h[i] + (1 - q) * ev.psi_next[i]
    return float(q * payoff.f[i] + (1 - q) * ev.phi_next[i] + payoff.g(y))


def evaluate_series(model: MarkovModel, payoff: PayoffSpec, strategy, truncation: int) -> Evaluation:
    """Truncated product-series evaluation by forward mass propagation.

    ``tail_mass[x]`` bounds the truncation error: ``|phi - phi_exact| <=
    tail_mass * max|f|``.
    """
    if truncation < 1:
        raise ParameterError("truncation must be at least 1")
    require_valid(model)
    p = as_strategy(strategy, model.n)
    phi, psi, tail = _kernels.series(
        np.ascontiguousarray(model.transition), p.copy(), model.absorbing_mask.copy(),
        payoff.f.copy(), payoff.h.copy(), int(truncation),
    )
    return _assemble(model, payoff, p, phi, psi, tail)


@dataclass(frozen=True)
class SimulationResult:
    phi_hat: float
    psi_hat: float
    phi_se: float
    psi_se: float
    paths: int
    seed: int


def _threads() -> int:
    raw = os.environ.get("EQSTOP_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _run_shard(table, p, absorbing, start, n_paths, seed, shard, advance):
    rng = np.random.default_rng([seed, shard])
    final = np.full(n_paths, start, dtype=np.int64)
    live = np.arange(n_paths)
    state = final.copy()
    steps = 0
    while live.size:
        if steps >= MAX_PATH_STEPS:
            raise RuntimeError(f"path exceeded {MAX_PATH_STEPS} steps")
        u = rng.random((live.size, BLOCK_STEPS))
        stopped = advance(state, *table, p, absorbing, u)
        final[live[stopped]] = state[stopped]
        live = live[~stopped]
        state = state[~stopped].copy()
        steps += BLOCK_STEPS
    return final


def simulate(model: MarkovModel, payoff: PayoffSpec, strategy, start, paths: int, seed: int,
             backend: str | None = None) -> SimulationResult:
    """Monte Carlo estimate of ``phi_p(start)`` and ``psi_p(start)``.

    At each step a uniform ``Y`` in (0, 1] is drawn and the path stops when
    ``Y <= p_{X_n}``; otherwise the rescaled ``(Y - p) / (1 - p)`` picks the
    next state; a path sitting in an absorbing state ends there. Paths are
    split into fixed-size shards whose random streams derive from
    ``(seed, shard)``, so output does not depend on the worker count
    (``EQSTOP_THREADS``) nor on the kernel backend.
    """
    if paths < 1:
        raise ParameterError("paths must be at least 1")
    require_valid(model)
    p = as_strategy(strategy, model.n)
    x0 = model.index(start)
    table = _kernels.sampling_table(model.transition)
    absorbing = model.absorbing_mask.copy()
    backend = backend or _kernels.BACKEND
    if backend == "numba":
        if _kernels.advance_numba is None:
            raise ParameterError("numba backend unavailable")
        advance = _kernels.advance_numba
    else:
        advance = _kernels.advance_numpy
    sizes = [SHARD_PATHS] * (paths // SHARD_PATHS)
    if paths % SHARD_PATHS:
        sizes.append(paths % SHARD_PATHS)
    jobs = [(table, p, absorbing, x0, m, int(seed), k, advance) for k, m in enumerate(sizes)]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            finals = list(pool.map(lambda a: _run_shard(*a), jobs))
    else:
        finals = [_run_shard(*a) for a in jobs]
    final = np.concatenate(finals)
    fv = payoff.f[final]
    hv = payoff.h[final]
    ddof = 1 if paths > 1 else 0
    return SimulationResult(
        float(fv.mean()), float(hv.mean()),
        float(fv.std(ddof=ddof) / np.sqrt(paths)), float(hv.std(ddof=ddof) / np.sqrt(paths)),
        paths, int(seed),
    )
