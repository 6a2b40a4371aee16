"""Hot inner loops: series propagation of stopping mass and Monte Carlo path
advancement.

Each kernel exists twice, as a numba ``@njit`` function and as a pure-numpy
function. Path advancement is bit-identical across backends for the same
uniforms; series propagation agrees up to summation order. The numba path
is used unless numba is missing or ``EQSTOP_DISABLE_NUMBA`` is set to a
non-empty value other than ``0``.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

_disabled = os.environ.get("EQSTOP_DISABLE_NUMBA", "") not in ("", "0")
USE_NUMBA = numba is not None and not _disabled
BACKEND = "numba" if USE_NUMBA else "numpy"


# --- series propagation -----------------------------------------------------

def series_numpy(P, p, absorbing, f, h, steps):
    """Forward-propagate sub-probability mass from every start state.

    Row ``x`` of the mass matrix is the law of ``X_n`` on ``{tau > n-1}``
    started at ``x``. Mass at an absorbing state is credited with that state's
    reward (the chain never leaves it); mass at a transient state stops with
    probability ``p``. Returns the accumulated ``E[f]``, ``E[h]`` and the mass
    still unresolved after ``steps`` steps.
    """
    n = P.shape[0]
    mass = np.eye(n)
    phi = np.zeros(n)
    psi = np.zeros(n)
    keep = 1.0 - p
    keep[absorbing] = 0.0
    stop = p.copy()
    stop[absorbing] = 1.0
    for _ in range(steps):
        done = mass * stop
        phi += done @ f
        psi += done @ h
        mass = (mass * keep) @ P
        if not mass.any():
            break
    return phi, psi, mass.sum(axis=1)


def _series_loop(P, p, absorbing, f, h, steps):
    n = P.shape[0]
    mass = np.eye(n)
    nxt = np.empty((n, n))
    phi = np.zeros(n)
    psi = np.zeros(n)
    stop = p.copy()
    keep = 1.0 - p
    for j in range(n):
        if absorbing[j]:
            stop[j] = 1.0
            keep[j] = 0.0
    for _ in range(steps):
        alive = False
        for x in range(n):
            for j in range(n):
                nxt[x, j] = 0.0
            for j in range(n):
                m = mass[x, j]
                if m != 0.0:
                    d = m * stop[j]
                    phi[x] += d * f[j]
                    psi[x] += d * h[j]
                    c = m * keep[j]
                    if c != 0.0:
                        for k in range(n):
                            nxt[x, k] += c * P[j, k]
                        alive = True
        mass, nxt = nxt, mass
        if not alive:
            break
    tail = np.zeros(n)
    for x in range(n):
        for j in range(n):
            tail[x] += mass[x, j]
    return phi, psi, tail


# --- Monte Carlo path advancement -------------------------------------------

def advance_numpy(state, cols, cum, p, absorbing, u):
    """Advance paths through ``u.shape[1]`` steps.

    ``state`` is updated in place; returns a boolean mask of paths that
    stopped (or sit in an absorbing state). Path ``j`` at step ``t`` uses the
    single uniform ``y = 1 - u[j, t]`` in (0, 1]: it stops when ``y <= p``,
    otherwise ``(y - p) / (1 - p)``, again uniform on (0, 1], picks the move.
    """
    n_paths = state.shape[0]
    stopped = np.zeros(n_paths, dtype=np.bool_)
    live = np.arange(n_paths)
    for t in range(u.shape[1]):
        if live.size == 0:
            break
        s = state[live]
        y = 1.0 - u[live, t]
        ps = p[s]
        halt = absorbing[s] | (y <= ps)
        stopped[live[halt]] = True
        go = ~halt
        live = live[go]
        s = s[go]
        ps = ps[go]
        v = (y[go] - ps) / (1.0 - ps)
        k = (cum[s] < v[:, None]).sum(axis=1)
        state[live] = cols[s, k]
    return stopped


def _advance_loop(state, cols, cum, p, absorbing, u):
    n_paths = state.shape[0]
    width = cum.shape[1]
    stopped = np.zeros(n_paths, dtype=np.bool_)
    for j in range(n_paths):
        s = state[j]
        for t in range(u.shape[1]):
            y = 1.0 - u[j, t]
            ps = p[s]
            if absorbing[s] or y <= ps:
                stopped[j] = True
                break
            v = (y - ps) / (1.0 - ps)
            k = 0
            while k < width and cum[s, k] < v:
                k += 1
            s = cols[s, k]
        state[j] = s
    return stopped


if USE_NUMBA:
    series_numba = numba.njit(cache=True, nogil=True)(_series_loop)
    advance_numba = numba.njit(cache=True, nogil=True)(_advance_loop)
    series = series_numba
    advance = advance_numba
else:
    series_numba = advance_numba = None
    series = series_numpy
    advance = advance_numpy


def sampling_table(P: np.ndarray):
    """Padded sparse inverse-CDF table ``(cols, cum)``.

    Row ``i`` lists the support of ``P[i]`` and its running sums; the last
    support entry (and the padding after it) is raised to 2.0 so rounding in
    the sums can never select a state outside the support.
    """
    n = P.shape[0]
    support = [np.flatnonzero(P[i] > 0) for i in range(n)]
    width = max(len(c) for c in support)
    cols = np.empty((n, width), dtype=np.int64)
    cum = np.full((n, width), 2.0)
    for i, c in enumerate(support):
        cols[i, :c.size] = c
        cols[i, c.size:] = c[-1]
        cum[i, :c.size] = np.cumsum(P[i, c])
        cum[i, c.size - 1:] = 2.0
    return cols, cum
