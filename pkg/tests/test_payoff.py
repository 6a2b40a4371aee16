import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eqstop.chain import MarkovModel, with_killing
from eqstop.errors import CapabilityError, ParameterError
from eqstop.payoff import (
    affine_g, g_from_dict, identity_residual, make_mean_variance, make_payoff, make_variance,
    mean_variance_g, neg_square_g, payoff_from_dict, piecewise_g, shifted_positive_part_g,
    verify_shape, zero_g,
)
from eqstop.problems import skipfree_model


def test_mean_variance_value():
    assert mean_variance_g(0.07)(1.0) == pytest.approx(1.07, abs=1e-15)


def test_shifted_positive_part_at_eight_sevenths():
    assert shifted_positive_part_g(1.0)(8 / 7) == pytest.approx(1 / 7, abs=1e-15)


def test_neg_square_derivatives():
    g = neg_square_g()
    for y in (-3.0, 0.0, 2.5):
        assert g.prime(y) == -2 * y
        assert g.second(y) == -2.0


def test_derivative_beyond_declared_order():
    with pytest.raises(CapabilityError):
        shifted_positive_part_g(1.0).prime(0.5)
    g = piecewise_g([0.0], [[0.0], [0.0, 1.0]], shape="convex", differentiability=0)
    with pytest.raises(CapabilityError):
        g.second(1.0)


def test_vectorised_evaluation():
    y = np.array([0.0, 1.0, 2.0])
    assert np.array_equal(zero_g()(y), np.zeros(3))
    assert np.array_equal(affine_g(2.0, 1.0)(y), [1.0, 3.0, 5.0])
    assert np.array_equal(shifted_positive_part_g(1.0)(y), [0.0, 0.0, 1.0])
    assert np.allclose(mean_variance_g(1.0).prime(y), 1 + 2 * y)


def test_piecewise_right_piece_at_breakpoint():
    g = piecewise_g([1.0], [[0.0], [-1.0, 1.0]], shape="convex")
    assert g(1.0) == 0.0
    assert g(3.0) == 2.0
    assert g(0.0) == 0.0


def test_gamma_must_be_positive():
    for bad in (0.0, -1.0):
        with pytest.raises(ParameterError):
            mean_variance_g(bad)


def test_shape_verification():
    assert verify_shape(mean_variance_g(1.0), -5, 5)
    cubic = piecewise_g([], [[0, 0, 0, 1]], shape="convex", differentiability=2)
    assert verify_shape(cubic, 0, 2)
    assert not verify_shape(cubic, -1, 2)
    kink = piecewise_g([0.0], [[0.0], [0.0, -1.0]], shape="convex")
    assert not verify_shape(kink, -1, 1)
    relu = piecewise_g([0.0], [[0.0], [0.0, 1.0]], shape="convex")
    assert verify_shape(relu, -1, 1)
    assert not verify_shape(piecewise_g([0.0], [[0.0], [0.0, 1.0]], shape="strictly_convex"), -1, 1)


def test_make_payoff_rejects_false_shape():
    m = skipfree_model([0.0, 1.0, 2.0])
    g = piecewise_g([], [[0, 0, -1]], shape="convex", differentiability=2)
    with pytest.raises(ParameterError):
        make_payoff(m, [0, 0, 0], [0, 1, 2], g)


def test_mean_variance_identity():
    m = MarkovModel.from_arrays([1.0, 2.0], [[0.5, 0.5], [0, 1]])
    pay = make_mean_variance(m, 3.0)
    assert pay.f[1] == -12.0 and pay.h[1] == 2.0
    assert pay.f[1] + pay.g(pay.h[1]) == 2.0
    assert identity_residual(m, pay) == 0.0


def test_variance_identity():
    m = skipfree_model([0.0, 2.0, 5.0])
    pay = make_variance(m)
    assert pay.f[2] == 25.0 and pay.h[2] == 5.0
    assert pay.f[2] + pay.g(pay.h[2]) == 0.0


def test_zero_state_zero_payoff():
    pay = make_mean_variance(skipfree_model([0.0, 1.0, 2.0]), 0.07)
    assert pay.f[0] == 0.0 and pay.h[0] == 0.0


def test_cemetery_constraints():
    k = with_killing(skipfree_model([0.0, 1.0, 2.0]), 0.9)
    make_mean_variance(k, 1.0)
    with pytest.raises(ParameterError):
        make_payoff(k, [1, 1, 1, 1], [0, 1, 2, 0], zero_g())
    with pytest.raises(ParameterError):
        make_payoff(k, [0, 0, 0, 0], [0, 1, 2, 0], affine_g(1.0, 1.0))


def test_length_mismatch():
    with pytest.raises(ParameterError):
        make_payoff(skipfree_model([0.0, 1.0, 2.0]), [0, 0], [0, 0], zero_g())


def test_payoff_dict_round_trip():
    m = skipfree_model([0.0, 1.0, 2.0])
    pays = [make_mean_variance(m, 0.5), make_variance(m),
            make_payoff(m, [0, 1, 0], [0, 1, 2], shifted_positive_part_g(1.0)),
            make_payoff(m, [0, 1, 0], [0, 1, 2], piecewise_g([1.0], [[0.0], [-1.0, 1.0]], "convex"))]
    for pay in pays:
        back = payoff_from_dict(m, pay.to_dict())
        assert back.g == pay.g
        assert np.array_equal(back.f, pay.f) and np.array_equal(back.h, pay.h)
    with pytest.raises(ParameterError):
        g_from_dict({"family": "exotic"})


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0.0, 1.0), st.floats(0.01, 5.0))
def test_declared_convexity_holds(a, b, t, gamma):
    for g in (mean_variance_g(gamma), shifted_positive_part_g(0.3), affine_g(1.5, -2.0)):
        lhs = g(t * a + (1 - t) * b)
        rhs = t * g(a) + (1 - t) * g(b)
        assert lhs <= rhs + 1e-9 * (1 + abs(rhs))
