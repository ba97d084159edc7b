import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vaelime.errors import DegenerateSystem, NotPositiveDefinite
from vaelime.linalg import cholesky, cholesky_solve, solve_wls


def normal_equations_oracle(x, y, w, lam):
    """Direct evaluation of (X^T W X + lam J)^-1 X^T W y with numpy's dense solver."""
    j = np.eye(x.shape[1]) * lam
    j[0, 0] = 0.0
    wm = np.diag(w)
    return np.linalg.solve(x.T @ wm @ x + j, x.T @ wm @ y)


def test_cholesky_solve_identity():
    np.testing.assert_array_equal(cholesky_solve(np.eye(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


def test_cholesky_solve_two_by_two():
    a = np.array([[4.0, 2.0], [2.0, 3.0]])
    b = a @ np.array([1.0, 1.0])  # forward-multiply oracle gives (6, 5)
    np.testing.assert_array_equal(b, [6.0, 5.0])
    np.testing.assert_allclose(cholesky_solve(a, b), [1.0, 1.0], atol=1e-14)


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        cholesky_solve(np.array([[1.0, 2.0], [2.0, 1.0]]), [1.0, 1.0])


def test_cholesky_rejects_asymmetric():
    with pytest.raises(ValueError):
        cholesky(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_cholesky_factor_reconstructs(rng):
    m = rng.standard_normal((5, 5))
    a = m.T @ m + np.eye(5)
    low = cholesky(a)
    np.testing.assert_allclose(low @ low.T, a, atol=1e-12)
    assert np.allclose(low, np.tril(low))


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
def test_cholesky_solve_roundtrip(n, seed):
    r = np.random.default_rng(seed)
    m = r.standard_normal((n, n))
    a = m.T @ m + np.eye(n)
    x = r.standard_normal(n)
    b = a @ x
    got = cholesky_solve(a, b)
    np.testing.assert_allclose(got, x, atol=1e-8)
    assert np.max(np.abs(a @ got - b)) <= 1e-8 * (1 + np.max(np.abs(b)))


def test_wls_interpolates_two_points():
    sol = solve_wls([[1, 0], [1, 1]], [0, 1], [1, 1], lam=0.0)
    np.testing.assert_allclose(sol.beta, [0.0, 1.0], atol=1e-12)


def test_wls_ignores_zero_weight():
    sol = solve_wls([[1, 0], [1, 1], [1, 2]], [0, 1, 7], [1, 1, 0], lam=0.0)
    np.testing.assert_allclose(sol.beta, [0.0, 1.0], atol=1e-12)


def test_wls_matches_normal_equations_oracle(rng):
    x = np.hstack([np.ones((6, 1)), rng.standard_normal((6, 2))])
    y = rng.standard_normal(6)
    w = np.array([1.0, 2.0, 1.0, 1.0, 3.0, 1.0])
    sol = solve_wls(x, y, w, lam=0.1)
    np.testing.assert_allclose(sol.beta, normal_equations_oracle(x, y, w, 0.1), atol=1e-10)


def test_intercept_is_not_penalized():
    # a huge ridge shrinks the slope to ~0 but leaves the intercept at the weighted mean
    x = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
    y = np.array([5.0, 6.0, 7.0])
    sol = solve_wls(x, y, np.ones(3), lam=1e12)
    assert abs(sol.beta[1]) < 1e-9
    assert sol.beta[0] == pytest.approx(6.0, abs=1e-6)


@pytest.mark.parametrize("c", [0.5, 3.0, 1e4])
def test_wls_weight_scaling_invariance(rng, c):
    x = np.hstack([np.ones((20, 1)), rng.standard_normal((20, 3))])
    y = rng.standard_normal(20)
    w = rng.uniform(0.1, 2.0, 20)
    base = solve_wls(x, y, w, lam=0.0).beta
    np.testing.assert_allclose(solve_wls(x, y, c * w, lam=0.0).beta, base, atol=1e-10)


def test_wls_exact_recovery(rng):
    x = np.hstack([np.ones((50, 1)), rng.standard_normal((50, 4))])
    beta = np.array([0.3, -1.0, 2.0, 0.5, 4.0])
    sol = solve_wls(x, x @ beta, np.ones(50), lam=0.0)
    np.testing.assert_allclose(sol.beta, beta, atol=1e-8)
    assert sol.condition_hint > 0


def test_wls_near_collinear_recovery(rng):
    # second feature is the first plus a 1e-5 wiggle; refinement keeps the exact fit
    a = rng.standard_normal(200)
    x = np.column_stack([np.ones(200), a, a + 1e-5 * rng.standard_normal(200)])
    beta = np.array([1.0, 2.0, -3.0])
    sol = solve_wls(x, x @ beta, np.ones(200), lam=0.0)
    np.testing.assert_allclose(sol.beta, beta, atol=1e-4)


def test_wls_all_zero_weights():
    with pytest.raises(DegenerateSystem):
        solve_wls([[1, 0], [1, 1]], [0, 1], [0, 0], lam=0.0)


def test_wls_duplicate_column_falls_back_to_floor():
    x = np.array([[1.0, 0.0, 0.0], [1.0, 1.0, 1.0], [1.0, 2.0, 2.0]])
    sol = solve_wls(x, [0.0, 1.0, 2.0], np.ones(3), lam=0.0, lambda_floor=1e-8)
    assert sol.ridge == 1e-8
    # the floor splits the slope evenly between the twin columns
    np.testing.assert_allclose(sol.beta, [0.0, 0.5, 0.5], atol=1e-6)


def test_wls_degenerate_even_at_floor():
    x = np.array([[1.0, 0.0, 0.0], [1.0, 1.0, 1.0], [1.0, 2.0, 2.0]])
    with pytest.raises(DegenerateSystem):
        solve_wls(x, [0.0, 1.0, 2.0], np.ones(3), lam=0.0, lambda_floor=0.0)
