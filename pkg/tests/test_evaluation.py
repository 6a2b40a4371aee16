import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eqstop import _kernels
from eqstop.chain import with_killing
from eqstop.errors import ParameterError
from eqstop.evaluation import (
    evaluate, evaluate_batch, evaluate_series, k_value, record_evaluations, simulate,
)
from eqstop.payoff import make_payoff, make_variance, mean_variance_g, zero_g

from _util import ex5_1_instance, random_chain, random_strategy, variance_walk_instance

P_HAT = [1.0, 0.5, 0.0, 1.0]


def test_example_values():
    m, pay = ex5_1_instance()
    ev = evaluate(m, pay, P_HAT)
    np.testing.assert_allclose(ev.psi, [0, 2 / 7, 8 / 7, 2], atol=1e-12)
    np.testing.assert_array_equal(ev.phi, 0.0)
    assert ev.J[2] == pytest.approx(1 / 7, abs=1e-12)


def test_stop_everywhere_returns_rewards():
    rng = np.random.default_rng(3)
    m = random_chain(rng, n=6)
    pay = make_payoff(m, rng.normal(size=6), rng.normal(size=6), mean_variance_g(1.0))
    ev = evaluate(m, pay, np.ones(6))
    np.testing.assert_array_equal(ev.phi, pay.f)
    np.testing.assert_array_equal(ev.psi, pay.h)


@pytest.mark.parametrize("M", [1, 2, 3, 10, 100])
def test_variance_walk_closed_form(M):
    m, pay, p = variance_walk_instance(M)
    ev = evaluate(m, pay, p)
    i = np.arange(M + 1)
    np.testing.assert_allclose(ev.phi, i * M / 2, atol=1e-10 * M * M)
    np.testing.assert_allclose(ev.psi, i / 2, atol=1e-12 * M)
    np.testing.assert_allclose(ev.J, i * M / 2 - (i / 2) ** 2, atol=1e-10)


def test_absorbing_entries_irrelevant():
    m, pay = ex5_1_instance()
    a = evaluate(m, pay, [0.0, 0.5, 0.0, 0.3])
    b = evaluate(m, pay, P_HAT)
    np.testing.assert_array_equal(a.psi, b.psi)


def test_strategy_validation():
    m, pay = ex5_1_instance()
    for bad in ([1, 1, 1], [1, 2, 0, 1], [1, np.nan, 0, 1]):
        with pytest.raises(ParameterError):
            evaluate(m, pay, bad)


def test_k_value_example():
    m, pay = ex5_1_instance()
    assert k_value(m, pay, P_HAT, 2, 0.0) == pytest.approx(1 / 7, abs=1e-14)
    assert k_value(m, pay, P_HAT, 2, 1.0) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ParameterError):
        k_value(m, pay, P_HAT, 2, 1.5)


def test_k_zero_g_is_affine():
    rng = np.random.default_rng(5)
    m = random_chain(rng, n=5)
    pay = make_payoff(m, rng.normal(size=5), np.zeros(5), zero_g())
    p = random_strategy(rng, 5)
    ev = evaluate(m, pay, p)
    x = int(m.transient[0])
    ks = [k_value(m, pay, p, x, q, ev) for q in (0.0, 0.5, 1.0)]
    assert ks[1] == pytest.approx((ks[0] + ks[2]) / 2, abs=1e-12)
    assert ks[2] - ks[0] == pytest.approx(pay.f[x] - ev.phi_next[x], abs=1e-12)


def test_series_examples():
    m, pay = ex5_1_instance()
    ev = evaluate_series(m, pay, P_HAT, 200)
    assert ev.psi[1] == pytest.approx(2 / 7, abs=1e-8)
    once = evaluate_series(m, pay, np.ones(4), 1)
    np.testing.assert_array_equal(once.psi, pay.h)
    with pytest.raises(ParameterError):
        evaluate_series(m, pay, P_HAT, 0)


def test_series_tail_bound():
    m, pay, p = variance_walk_instance(5)
    exact = evaluate(m, pay, p)
    for t in (5, 20, 80):
        ev = evaluate_series(m, pay, p, t)
        bound = ev.tail_mass * np.max(np.abs(pay.f))
        assert np.all(np.abs(ev.phi - exact.phi) <= bound + 1e-12)


def test_batch_matches_single():
    rng = np.random.default_rng(11)
    m = random_chain(rng, n=7)
    pay = make_payoff(m, rng.normal(size=7), rng.normal(size=7), mean_variance_g(0.5))
    S = np.array([random_strategy(rng, 7) for _ in range(20)])
    phi, psi = evaluate_batch(m, pay, S, chunk=6)
    for s, a, b in zip(S, phi, psi):
        ev = evaluate(m, pay, s)
        np.testing.assert_allclose(a, ev.phi, atol=1e-12)
        np.testing.assert_allclose(b, ev.psi, atol=1e-12)


def test_killed_chain_values():
    m, pay, p = variance_walk_instance(3)
    k = with_killing(m, 0.5)
    kp = make_variance(k)
    ev = evaluate(k, kp, np.append(p, 1.0))
    assert ev.phi[-1] == 0.0
    assert np.all(ev.psi[:-1] <= evaluate(m, pay, p).psi + 1e-12)


def test_recorder_collects():
    m, pay = ex5_1_instance()
    with record_evaluations() as seen:
        evaluate(m, pay, P_HAT)
        evaluate_series(m, pay, P_HAT, 10)
    assert len(seen) == 2
    evaluate(m, pay, P_HAT)
    assert len(seen) == 2


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 100_000))
def test_one_step_recursion(seed):
    rng = np.random.default_rng(seed)
    m = random_chain(rng)
    pay = make_payoff(m, rng.normal(size=m.n), rng.normal(size=m.n), mean_variance_g(1.0))
    p = random_strategy(rng, m.n)
    ev = evaluate(m, pay, p)
    np.testing.assert_allclose(ev.phi, p * pay.f + (1 - p) * ev.phi_next, atol=1e-10)
    np.testing.assert_allclose(ev.psi, p * pay.h + (1 - p) * ev.psi_next, atol=1e-10)
    for x in range(m.n):
        assert k_value(m, pay, p, x, p[x], ev) == pytest.approx(ev.J[x], abs=1e-10)


# --- simulation ----------------------------------------------------------------

def test_simulate_stop_everywhere_exact():
    m, pay = ex5_1_instance()
    r = simulate(m, pay, np.ones(4), 2, 1000, seed=1)
    assert r.psi_hat == pay.h[2] and r.psi_se == 0.0


def test_simulate_deterministic_and_thread_independent(monkeypatch):
    m, pay = ex5_1_instance()
    a = simulate(m, pay, P_HAT, 2, 20_000, seed=7)
    monkeypatch.setenv("EQSTOP_THREADS", "3")
    b = simulate(m, pay, P_HAT, 2, 20_000, seed=7)
    assert a == b
    c = simulate(m, pay, P_HAT, 2, 20_000, seed=8)
    assert c != a


def test_simulate_example_within_four_se():
    m, pay = ex5_1_instance()
    r = simulate(m, pay, P_HAT, 2, 50_000, seed=0)
    assert abs(r.psi_hat - 8 / 7) <= 4 * r.psi_se


def test_simulate_variance_walk_m100():
    m, pay, p = variance_walk_instance(100)
    r = simulate(m, pay, p, 50, 100_000, seed=2024)
    assert abs(r.phi_hat - 2500.0) <= 4 * r.phi_se


@pytest.mark.skipif(_kernels.advance_numba is None, reason="numba not installed")
def test_backends_bit_identical():
    rng = np.random.default_rng(0)
    for _ in range(10):
        m = random_chain(rng)
        pay = make_payoff(m, rng.normal(size=m.n), rng.normal(size=m.n), zero_g())
        p = random_strategy(rng, m.n)
        x = int(rng.integers(m.n))
        a = simulate(m, pay, p, x, 3000, seed=5, backend="numba")
        b = simulate(m, pay, p, x, 3000, seed=5, backend="numpy")
        assert a == b


@pytest.mark.skipif(_kernels.series_numba is None, reason="numba not installed")
def test_series_backends_agree():
    rng = np.random.default_rng(1)
    m = random_chain(rng, n=6)
    args = (np.ascontiguousarray(m.transition), random_strategy(rng, 6), m.absorbing_mask.copy(),
            rng.normal(size=6), rng.normal(size=6), 300)
    a = _kernels.series_numba(*args)
    b = _kernels.series_numpy(*args)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, atol=1e-13)


def test_sampling_table_stays_in_support():
    P = np.array([[1.0, 0, 0], [0.1, 0.0, 0.9], [0, 0, 1.0]])
    cols, cum = _kernels.sampling_table(P)
    assert cols[1].tolist()[:2] == [0, 2]
    assert cum[1, 1] == 2.0


def test_env_flag_selects_numpy_backend():
    import subprocess
    import sys

    code = ("import eqstop, numpy as np; from eqstop.problems import paper_example; "
            "e = paper_example('ex5_1'); r = eqstop.simulate(e.model, e.payoff, [1, .5, 0, 1], 2, 2000, 3); "
            "print(eqstop.BACKEND, r.psi_hat)")
    env = {**__import__("os").environ, "EQSTOP_DISABLE_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, psi = out.stdout.split()
    assert backend == "numpy"
    m, pay = ex5_1_instance()
    assert float(psi) == simulate(m, pay, P_HAT, 2, 2000, 3).psi_hat
