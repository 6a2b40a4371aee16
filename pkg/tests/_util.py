"""Shared instance builders for the test suite."""

import numpy as np

from eqstop.chain import MarkovModel
from eqstop.payoff import make_mean_variance, make_payoff, shifted_positive_part_g
from eqstop.problems import skipfree_model, variance_walk_model


def random_chain(rng, n=None, max_n=8, density=0.5):
    """Random absorbing chain. Every transient state puts mass on some
    lower-indexed state, so absorption is reachable from everywhere; the
    labels are then shuffled by a random permutation."""
    n = n or int(rng.integers(2, max_n + 1))
    n_abs = int(rng.integers(1, max(2, n // 2) + 1))
    P = np.zeros((n, n))
    for i in range(n_abs):
        P[i, i] = 1.0
    for i in range(n_abs, n):
        w = rng.random(n) * (rng.random(n) < density)
        w[int(rng.integers(0, i))] += rng.random() + 0.1
        P[i] = w / w.sum()
    perm = rng.permutation(n)
    P = P[np.ix_(perm, perm)]
    values = np.round(rng.normal(size=n), 3)
    return MarkovModel.from_arrays(values, P)


def random_strategy(rng, n, pure=False):
    if pure:
        return rng.integers(0, 2, n).astype(float)
    p = rng.random(n)
    mask = rng.random(n) < 0.3
    p[mask] = np.round(p[mask])
    return p


def ex5_1_instance():
    model = skipfree_model([0.0, 1.0, 2.0, 3.0])
    pay = make_payoff(model, np.zeros(4), [0.0, 0.0, 1.0, 2.0], shifted_positive_part_g(1.0))
    return model, pay


def two_equilibria_instance(gamma=3.0):
    model = MarkovModel.from_arrays([1.0, 2.0], [[0.5, 0.5], [0.0, 1.0]])
    return model, make_mean_variance(model, gamma)


def no_equilibrium_instance():
    P = np.array([[1, 0, 0, 0], [0.5, 0, 0.5, 0], [0, 0.5, 0, 0.5], [0, 0, 0, 1.0]])
    model = MarkovModel.from_arrays([0.39, 0.52, 0.70, 0.97], P)
    return model, make_mean_variance(model, 1.0)


def global_stable_instance():
    from eqstop.payoff import make_variance

    model = MarkovModel.from_arrays([0.0, 1.0], [[1.0, 0.0], [0.5, 0.5]])
    return model, make_variance(model)


def variance_walk_instance(M):
    from eqstop.payoff import make_variance

    model = variance_walk_model(M)
    p = np.zeros(M + 1)
    p[0] = 1.0
    p[M] = 1.0 / (M + 1)
    return model, make_variance(model), p
