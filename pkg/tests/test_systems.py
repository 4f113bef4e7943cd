import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nullwave.systems import (BOUND_NAMES, NonlinearSystem, catalog, check_derivative_bounds,
                              check_null, get_system, polynomial_system, sample_jets,
                              semilinear_reduce, system_fingerprint, validate_symmetric)

EXPECTED = {"zero": "PASS", "semi_null": "PASS", "quasi_null": "PASS",
            "riccati": "FAIL(cond_F)", "general_quad": "FAIL(cond_F)", "semi_reducible": "PASS"}


def test_catalog_names():
    names = [s.name for s in catalog()]
    assert len(names) >= 6
    assert set(EXPECTED) <= set(names)


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("name", list(EXPECTED))
def test_catalog_classification(name, n):
    sys_ = get_system(name, n)
    report = check_null(sys_)
    assert report.verdict() == EXPECTED[name]
    assert report.passed == sys_.claims_null


def test_unknown_system():
    with pytest.raises(KeyError, match="unknown system"):
        get_system("nope")


@pytest.mark.parametrize("n", [1, 3])
def test_catalog_symmetric(n):
    for s in catalog(n):
        assert validate_symmetric(s, radius=0.25, n_samples=100, seed=3) <= 1e-12


def test_non_symmetric_rejected():
    bad = {"n": 2, "A2": {"0,1": [{"coef": 1.0, "q": [1, 0]}]}}
    with pytest.raises(ValueError, match="non-symmetric"):
        polynomial_system(bad)


def test_riccati_reason_and_magnitude():
    r = check_null(get_system("riccati"))
    assert r.failed() == ["cond_F"]
    assert r.cond_F.violation > 1e-3
    assert "vanishing slice" in r.cond_F.reason


def test_a1_constant_fails_order():
    s = NonlinearSystem("const_a1", 1, A1=lambda u, p, q: 0.1 * np.ones((1, 1) + u.shape[1:]))
    r = check_null(s)
    assert not r.cond_A1.passed
    assert "A1(0)" in r.cond_A1.reason


def test_nonfinite_evaluation_fails_with_reason():
    s = NonlinearSystem("wild", 1, F=lambda u, p, q: p * q / np.where(p > 0, 0.0, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = check_null(s)
    assert not r.cond_F.passed
    assert r.cond_F.reason == "non-finite evaluation"


@pytest.mark.parametrize("radius", [0.0, -0.1, 0.6])
def test_radius_out_of_range(radius):
    with pytest.raises(ValueError):
        check_null(get_system("semi_null"), radius=radius)


def test_too_few_samples():
    with pytest.raises(ValueError):
        check_null(get_system("semi_null"), n_samples=10)


@settings(max_examples=20, deadline=None)
@given(radius=st.floats(0.01, 0.5), seed=st.integers(0, 10_000),
       name=st.sampled_from(["semi_null", "quasi_null", "semi_reducible", "zero"]))
def test_pass_is_monotone_in_radius(radius, seed, name):
    s = get_system(name)
    if check_null(s, radius=radius, seed=seed).passed:
        assert check_null(s, radius=radius / 2, seed=seed).passed


def test_check_null_deterministic():
    a = check_null(get_system("general_quad"), seed=11)
    b = check_null(get_system("general_quad"), seed=11)
    assert a == b


def test_derivative_bounds_zero_system():
    out = check_derivative_bounds(get_system("zero"))
    assert set(out) == set(BOUND_NAMES)
    assert all(v == 0.0 for v in out.values())


def test_derivative_bounds_a2_equals_q():
    s = NonlinearSystem("a2q", 1, A2=lambda u, p, q: q[None])
    out = check_derivative_bounds(s, n_samples=2000)
    # d_eta q = u_eta_eta, so the constant is attained and equals one.
    assert out["deta_A2"] == pytest.approx(1.0, abs=0.05)
    assert out["deta_A2"] <= 1.0 + 1e-6
    assert out["dxi_A2"] <= 1.0 + 1e-6


def test_derivative_bounds_source_pq():
    out = check_derivative_bounds(get_system("semi_null"), n_samples=2000)
    assert out["dxi_F"] <= 1.0 + 1e-6
    assert out["deta_F"] <= 1.0 + 1e-6
    assert out["dxi_F"] > 0.5


def test_derivative_bounds_quasi_null_finite():
    out = check_derivative_bounds(get_system("quasi_null"))
    assert all(np.isfinite(v) for v in out.values())


def test_derivative_bounds_rejects_large_samples():
    jets = sample_jets(1, 0.5, 50, 0)
    jets["u"] = jets["u"] + 10.0
    with pytest.raises(ValueError, match="nu0"):
        check_derivative_bounds(get_system("semi_null"), jets=jets)


def test_reduce_identity_when_a1_zero():
    s = get_system("semi_null")
    r = semilinear_reduce(s)
    rng = np.random.default_rng(0)
    u, p, q = rng.normal(size=(3, 1, 40))
    np.testing.assert_array_equal(r.source(u, p, q), s.source(u, p, q))
    assert r.A1 is None and r.A2 is None and r.A3 is None


def test_reduce_scalar_half():
    r = semilinear_reduce(get_system("semi_reducible"))
    p, q = np.array([[0.3]]), np.array([[-0.2]])
    assert r.source(np.array([[0.5]]), p, q)[0, 0] == pytest.approx(2 * 0.3 * -0.2, rel=1e-14)


def test_reduce_matrix_case():
    s = NonlinearSystem("m2", 2, A1=lambda u, p, q: u[0] * np.eye(2)[:, :, None] * np.ones(u.shape[1:]),
                        F=lambda u, p, q: p * q)
    r = semilinear_reduce(s)
    rng = np.random.default_rng(1)
    u, p, q = rng.uniform(-0.3, 0.3, size=(3, 2, 25))
    np.testing.assert_allclose(r.source(u, p, q), p * q / (1 - u[0]), rtol=1e-13)


def test_reduce_preserves_null_and_is_idempotent():
    once = semilinear_reduce(get_system("semi_reducible"))
    assert check_null(once).passed
    twice = semilinear_reduce(once)
    rng = np.random.default_rng(2)
    u, p, q = rng.uniform(-0.2, 0.2, size=(3, 1, 30))
    np.testing.assert_array_equal(twice.source(u, p, q), once.source(u, p, q))


def test_reduce_rejects_a2():
    with pytest.raises(ValueError, match="A2"):
        semilinear_reduce(get_system("quasi_null"))


def test_reduce_rejects_singular():
    s = NonlinearSystem("sing", 1, A1=lambda u, p, q: np.ones((1, 1) + u.shape[1:]),
                        F=lambda u, p, q: p * q)
    with pytest.raises(ValueError, match="singular"):
        semilinear_reduce(s)


def test_polynomial_system_matches_catalog():
    data = {"n": 1, "name": "poly_qn",
            "A1": {"0,0": [{"coef": 1.0, "u": [1]}]},
            "A2": {"0,0": [{"coef": 1.0, "q": [1]}]},
            "A3": {"0,0": [{"coef": 1.0, "p": [1]}]},
            "F": {"0": [{"coef": 1.0, "p": [1], "q": [1]}]}}
    poly = polynomial_system(data)
    ref = get_system("quasi_null")
    rng = np.random.default_rng(4)
    u, p, q = rng.uniform(-0.3, 0.3, size=(3, 1, 20))
    for which in ("A1", "A2", "A3"):
        np.testing.assert_allclose(poly.matrix(which, u, p, q), ref.matrix(which, u, p, q), rtol=1e-14)
    np.testing.assert_allclose(poly.source(u, p, q), ref.source(u, p, q), rtol=1e-14)
    assert check_null(poly).passed


def test_polynomial_bad_index():
    with pytest.raises(ValueError, match="bad index"):
        polynomial_system({"n": 1, "F": {"1": [{"coef": 1.0}]}})


def test_swapped_exchanges_slices():
    s = NonlinearSystem("a2q", 1, A2=lambda u, p, q: q[None], F=lambda u, p, q: p * p).swapped()
    u, p, q = np.array([[0.1]]), np.array([[0.2]]), np.array([[0.3]])
    assert s.A2 is None
    assert s.matrix("A3", u, p, q)[0, 0, 0] == pytest.approx(0.2)
    assert s.source(u, p, q)[0, 0] == pytest.approx(0.09)


def test_quasi_null_swap_invariant():
    a, b = get_system("quasi_null"), get_system("quasi_null").swapped()
    u, p, q = np.random.default_rng(5).uniform(-0.3, 0.3, size=(3, 1, 20))
    for which in ("A1", "A2", "A3"):
        np.testing.assert_array_equal(a.matrix(which, u, p, q), b.matrix(which, u, p, q))


def test_fingerprint_distinguishes():
    assert system_fingerprint(get_system("semi_null")) == system_fingerprint(get_system("semi_null"))
    assert system_fingerprint(get_system("semi_null")) != system_fingerprint(get_system("riccati"))
