import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from nullwave.weights import (WeightSet, jb, phi, phi_prime, psi, psi_prime, q_closed_form,
                              q_table, q_total, q_weight, tail_integral)


def test_jb_values():
    assert jb(0.0) == 1.0
    assert jb(1.0) == pytest.approx(1.41421356, abs=1e-8)
    assert jb(-3.0) == pytest.approx(math.sqrt(10.0), rel=1e-15)
    assert jb(-3.0) == jb(3.0)


@pytest.mark.parametrize("delta", [0.1, 0.5, 0.9])
def test_phi_at_origin(delta):
    assert phi(0.0, WeightSet(delta)) == 1.0


def test_phi_at_one():
    assert phi(1.0, WeightSet(0.5)) == pytest.approx(2 ** 1.5, rel=1e-14)


def test_phi_derivative_bound_fd():
    w = WeightSet(0.5)
    h = 1e-5
    d = (phi(2 + h, w) - phi(2 - h, w)) / (2 * h)
    assert abs(d) <= 4 * jb(2.0) ** 2
    assert d == pytest.approx(phi_prime(2.0, w), rel=1e-8)


def test_phi_same_path_and_even():
    w = WeightSet(0.3)
    x = np.linspace(-20, 20, 101)
    assert np.array_equal(phi(x, w), jb(x) ** (2 + 2 * w.delta))
    assert np.array_equal(phi(x, w), phi(-x, w))


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.5])
def test_weightset_rejects_out_of_range(bad):
    with pytest.raises(ValueError):
        WeightSet(bad)


def test_q_far_left_vanishes():
    # The tail X^-delta / delta is only below 1e-5 at X = 1e6 for delta near 1.
    assert q_weight(-1e6, WeightSet(0.9)) < 1e-5
    assert q_weight(-1e6, WeightSet(0.9)) == pytest.approx(1e6 ** -0.9 / 0.9, rel=1e-3)


def test_q_infinity_arctan_oracle():
    # delta = 1 is outside the theorem's range and only serves as a closed form.
    assert q_total(1.0) == pytest.approx(math.pi, rel=1e-12)
    assert q_closed_form(1.0) == pytest.approx(math.pi, rel=1e-14)


@pytest.mark.parametrize("delta", [0.1, 0.25, 0.5, 0.75, 0.9])
def test_q_total_matches_beta(delta):
    assert q_total(delta) == pytest.approx(q_closed_form(delta), rel=1e-10)


@pytest.mark.parametrize("delta", [0.1, 0.5, 0.9])
def test_q_half_at_origin(delta):
    w = WeightSet(delta)
    assert q_weight(0.0, w) == pytest.approx(0.5 * w.q_infinity, rel=1e-10)


@pytest.mark.parametrize("X,rel", [(2.0, 1e-8), (5.0, 1e-11), (50.0, 1e-11), (400.0, 1e-11)])
def test_tail_series_vs_quad(X, rel):
    ref, _ = integrate.quad(lambda r: (1 + r * r) ** -0.75, X, np.inf, epsabs=0, epsrel=1e-13)
    assert tail_integral(X, 0.5) == pytest.approx(ref, rel=rel)


def test_q_table_matches_adaptive():
    w = WeightSet(0.5)
    x = np.array([-80.0, -50.0, -12.3, -1.0, 0.0, 0.7, 9.0, 49.9, 50.0, 120.0])
    np.testing.assert_allclose(q_table(x, w), q_weight(x, w), rtol=1e-10, atol=1e-13)


def test_q_table_refinement_stable():
    w = WeightSet(0.5)
    x = np.linspace(-60, 60, 241)
    np.testing.assert_allclose(q_table(x, w), q_table(x, w, refine=8), rtol=1e-12, atol=1e-14)


def test_psi_limits_and_identity_at_zero():
    w = WeightSet(0.5)
    assert psi(-1e7, w) == pytest.approx(1.0, abs=1e-3)
    h = 1e-4
    fd = (psi(h, w) - psi(-h, w)) / (2 * h)
    assert fd == pytest.approx(-psi(0.0, w), rel=1e-6)
    assert psi(1e12, w) == pytest.approx(math.exp(-q_total(w)), rel=1e-5)


def test_c_bound_value():
    w = WeightSet(0.5)
    assert w.c_bound >= 1
    assert w.c_bound == pytest.approx(math.exp(q_closed_form(w)), rel=1e-10)


@pytest.mark.parametrize("delta", [0.1, 0.5, 0.9])
def test_psi_two_sided_bounds(delta):
    w = WeightSet(delta)
    rng = np.random.default_rng(7)
    x = rng.uniform(-50, 50, 1000)
    h = 1e-5
    dpsi = -(psi(x + h, w) - psi(x - h, w)) / (2 * h)
    base = jb(x) ** (-w.decay)
    c = w.c_bound
    assert np.all(dpsi >= base / c * (1 - 1e-4))
    assert np.all(dpsi <= base * c * (1 + 1e-4))
    vals = psi(x, w)
    assert np.all(vals >= 1 / c) and np.all(vals <= c)


def test_psi_prime_analytic_matches_fd():
    w = WeightSet(0.5)
    x = np.linspace(-30, 30, 61)
    h = 1e-5
    fd = (psi(x + h, w) - psi(x - h, w)) / (2 * h)
    np.testing.assert_allclose(fd, psi_prime(x, w), rtol=1e-7)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(-200, 200), b=st.floats(-200, 200), delta=st.floats(0.05, 0.95))
def test_q_monotone(a, b, delta):
    w = WeightSet(delta)
    lo, hi = min(a, b), max(a, b)
    ql, qh = q_table(np.array([lo, hi]), w)
    assert ql <= qh + 1e-15
