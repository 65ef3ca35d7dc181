import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from raretail.errors import JetError
from raretail.jets import (Jet, WatsonBoundInputs, dh_iterates, dh_polynomial, jet_deriv, jet_mul, jet_recip,
                           polynomial_bound_inputs, watson_coeffs, watson_expand_1d, watson_remainder_bound)

jets = st.lists(st.floats(-3, 3, allow_nan=False), min_size=2, max_size=6)


class TestArithmetic:
    def test_recip_geometric(self):
        assert np.allclose(jet_recip(Jet([1, 1, 0, 0])).derivs, [1, -1, 2, -6])

    def test_mul_recip_identity(self, rng):
        a = Jet(np.r_[1.5, rng.standard_normal(4)])
        assert np.allclose(jet_mul(a, jet_recip(a)).derivs, [1, 0, 0, 0, 0], atol=1e-12)

    def test_deriv(self):
        assert np.array_equal(jet_deriv(Jet([3, 5, 7])).derivs, [5, 7])

    def test_recip_zero(self):
        with pytest.raises(JetError):
            jet_recip(Jet([0.0, 1.0]))

    def test_truncation_to_min_order(self):
        assert jet_mul(Jet([1, 2, 3]), Jet([1, 1])).order == 1

    def test_mul_matches_polynomial_product(self):
        # (1 + 2y)(3 - y + y^2) = 3 + 5y - y^2 + 2y^3
        a = Jet.from_taylor([1, 2, 0, 0])
        b = Jet.from_taylor([3, -1, 1, 0])
        assert np.allclose(jet_mul(a, b).taylor(), [3, 5, -1, 2])

    def test_operators(self):
        a = Jet([1.0, 2.0, 3.0])
        assert np.allclose((a * 2 + 1).derivs, [3, 4, 6])
        assert np.allclose((a / a).derivs, [1, 0, 0])
        assert np.allclose((a - a).derivs, 0)

    def test_from_polynomial(self):
        # p(t) = 1 + 2t + 3t^2 at t = 1: p = 6, p' = 8, p'' = 6
        assert np.allclose(Jet.from_polynomial([1, 2, 3], 1.0, 3).derivs, [6, 8, 6, 0])


@settings(max_examples=50, deadline=None)
@given(jets, jets)
def test_leibniz(a, b):
    m = min(len(a), len(b))
    A, B = Jet(a[:m]), Jet(b[:m])
    lhs = jet_deriv(jet_mul(A, B))
    rhs = jet_mul(jet_deriv(A), B.truncate(m - 2)) + jet_mul(A.truncate(m - 2), jet_deriv(B))
    assert np.allclose(lhs.derivs, rhs.derivs, atol=1e-9 * (1 + np.max(np.abs(lhs.derivs))))


class TestWatsonCoeffs:
    def test_exponential(self):
        assert np.allclose(watson_coeffs(Jet([1, 0, 0, 0]), Jet([0, 1, 0, 0]), 3), [1, 0, 0])

    def test_quadratic_w(self):
        assert np.allclose(watson_coeffs(Jet([1, 0, 0]), Jet([0, 1, 1, 0]), 2), [1, -1])

    def test_closed_forms(self, rng):
        for _ in range(20):
            q = Jet(rng.standard_normal(4))
            w = Jet(np.r_[0.0, rng.uniform(0.3, 2.0), rng.standard_normal(3)])
            c = watson_coeffs(q, w, 4)
            q0, q1 = q.derivs[:2]
            w1, w2 = w.derivs[1:3]
            assert c[0] == pytest.approx(q0 / w1, abs=1e-12)
            assert c[1] == pytest.approx(q1 / w1 ** 2 - q0 * w2 / w1 ** 3, abs=1e-12)

    def test_third_coefficient_integral(self):
        # int_0^inf e^{-lam (y + y^2/2)} dy expands as 1/lam - 1/lam^2 + 3/lam^3 - ...
        c = watson_coeffs(Jet([1, 0, 0, 0]), Jet([0, 1, 1, 0, 0]), 3)
        assert np.allclose(c, [1, -1, 3])

    def test_linear_in_q(self, rng):
        w = Jet(np.r_[0.0, 1.3, rng.standard_normal(3)])
        a, b = Jet(rng.standard_normal(4)), Jet(rng.standard_normal(4))
        assert np.allclose(watson_coeffs(a * 2 + b * 3, w, 4), 2 * watson_coeffs(a, w, 4) + 3 * watson_coeffs(b, w, 4))

    def test_errors(self):
        with pytest.raises(JetError):
            watson_coeffs(Jet([1, 0]), Jet([0, 1, 0]), 3)
        with pytest.raises(JetError):
            watson_coeffs(Jet([1, 0, 0]), Jet([0, -1, 0, 0]), 2)

    def test_dh_iterates_zero_order(self):
        assert np.allclose(dh_iterates(Jet([2.0, 1.0]), Jet([0, 4, 0]), 0), [2.0])


class TestRemainder:
    def test_single_term(self):
        assert watson_remainder_bound(WatsonBoundInputs(1, 1, 10, 1), 1) == pytest.approx(0.1)

    def test_arithmetic(self):
        inp = WatsonBoundInputs(b=0.5, T=0.2, lam=100, sup_DhL_f=2, boundary_vals=(1,))
        expected = 2 * 2 * 100 ** -2 + 2 * math.exp(-10) / 100
        assert watson_remainder_bound(inp, 2) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(4.00908e-4, rel=1e-5)

    def test_monotone_in_lambda(self):
        vals = [watson_remainder_bound(WatsonBoundInputs(0.5, 0.2, lam, 2, (1,)), 2) for lam in (10, 100, 1e3, 1e4)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_validation(self):
        with pytest.raises(JetError):
            WatsonBoundInputs(0, 1, 1, 1)
        with pytest.raises(JetError):
            watson_remainder_bound(WatsonBoundInputs(1, 1, 1, 1), 3)


class TestExpand1d:
    def test_linear_h(self):
        inp = WatsonBoundInputs(1, 1, 50, 0.0, (1.0,))
        value, bound = watson_expand_1d(Jet([1, 0]), Jet([0, 1, 0]), inp, 2)
        assert value == pytest.approx(0.02)
        assert abs(value - (1 - math.exp(-50)) / 50) <= bound

    def test_quadratic_h(self):
        lam, L = 50.0, 3
        inp = polynomial_bound_inputs([1.0], [0.0, 1.0, 0.5], 1.0, lam, L)
        value, bound = watson_expand_1d(Jet([1, 0, 0]), Jet([0, 1, 1, 0]), inp, L)
        assert value == pytest.approx(1 / 50 - 1 / 2500)
        exact = quad(lambda t: math.exp(-lam * (t + t * t / 2)), 0, 1, epsabs=1e-15)[0]
        assert abs(value - exact) <= bound

    def test_zero_f(self):
        value, bound = watson_expand_1d(Jet([0, 0, 0]), Jet([0, 1, 0, 0]), WatsonBoundInputs(1, 1, 20, 0.0, (0.0, 0.0)), 3)
        assert value == 0.0 and bound == 0.0

    def test_h0_nonzero(self):
        with pytest.raises(JetError):
            watson_expand_1d(Jet([1, 0]), Jet([0.1, 1, 0]), WatsonBoundInputs(1, 1, 1, 1), 2)


def random_watson_case(rng):
    T = rng.uniform(0.3, 2.0)
    b = rng.uniform(0.3, 1.5)
    # h' = b + nonnegative quadratic in t keeps h' >= b on [0, T]
    c1, c2 = rng.uniform(0, 1.5, 2)
    h = np.array([0.0, b, c1 / 2, c2 / 3])
    f = rng.uniform(-1, 1, 3)
    f[0] = rng.uniform(0.5, 2)
    return f, h, T


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from([20.0, 100.0]), st.sampled_from([2, 3, 4]))
def test_watson_error_within_bound(seed, lam, L):
    f, h, T = random_watson_case(np.random.default_rng(seed))
    inp = polynomial_bound_inputs(f, h, T, lam, L)
    value, bound = watson_expand_1d(Jet.from_polynomial(f, 0.0, L), Jet.from_polynomial(h, 0.0, L + 1), inp, L)
    exact = quad(lambda t: np.polyval(f[::-1], t) * math.exp(-lam * np.polyval(h[::-1], t)), 0, T,
                 epsabs=1e-16, epsrel=1e-13, limit=200)[0]
    assert abs(value - exact) <= bound * (1 + 1e-9) + 1e-15


def test_rational_form_matches_jets(rng):
    from numpy.polynomial import polynomial as P

    f, h = rng.standard_normal(3), np.array([0.0, 1.2, 0.3, 0.4])
    for t in (0.0, 0.3, 1.1):
        for j in range(4):
            N, k = dh_polynomial(f, h, j)
            a = P.polyval(t, N) / P.polyval(t, P.polyder(h)) ** k
            b = dh_iterates(Jet.from_polynomial(f, t, j), Jet.from_polynomial(h, t, j + 1), j)[-1]
            assert a == pytest.approx(b, rel=1e-10, abs=1e-12)
