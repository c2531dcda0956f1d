import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from growthpaths.basis import (
    basis_from_knots,
    build_basis,
    evaluate,
    gram_nodes,
    orthogonalize,
)
from growthpaths.errors import DegeneracyError, DomainError


def cox_de_boor(knots, degree, i, t):
    """Textbook recursion for the i-th B-spline of ``degree`` at scalar ``t``.

    The last basis function is made right-continuous at the final knot.
    """
    if degree == 0:
        if knots[i] <= t < knots[i + 1]:
            return 1.0
        last = knots[-1]
        if t == last and knots[i] < knots[i + 1] == last:
            return 1.0
        return 0.0
    out = 0.0
    d1 = knots[i + degree] - knots[i]
    if d1 > 0:
        out += (t - knots[i]) / d1 * cox_de_boor(knots, degree - 1, i, t)
    d2 = knots[i + degree + 1] - knots[i + 1]
    if d2 > 0:
        out += (knots[i + degree + 1] - t) / d2 * cox_de_boor(knots, degree - 1, i + 1, t)
    return out


def oracle_design(basis, t):
    knots = list(basis.knots)
    return np.array([[cox_de_boor(knots, basis.degree, i, x) for i in range(basis.dim)] for x in t])


@pytest.mark.parametrize("degree", [0, 1, 2, 3])
def test_design_matches_cox_de_boor(degree):
    basis = basis_from_knots((0.0, 1.0), degree, [0.2, 0.5, 0.55, 0.9])
    t = np.linspace(0, 1, 101)
    np.testing.assert_allclose(basis.design(t), oracle_design(basis, t), atol=1e-13)


def test_quadratic_at_quarter_by_hand():
    basis = basis_from_knots((0.0, 1.0), 2, [0.5])
    # knots 0,0,0,0.5,1,1,1: on [0, 0.5) with u = 2t the pieces are
    # (1-u)^2, 2u - 1.5u^2, u^2/2
    u = 0.5
    expected = [(1 - u) ** 2, 2 * u - 1.5 * u ** 2, u ** 2 / 2, 0.0]
    np.testing.assert_allclose(evaluate(basis, 0.25), expected, atol=1e-15)
    np.testing.assert_allclose(evaluate(basis, 0.25), oracle_design(basis, [0.25])[0], atol=1e-15)


def test_piecewise_constant_gram():
    basis = build_basis((0.0, 1.0), 0, 1, np.linspace(0, 1, 1001))
    np.testing.assert_allclose(basis.knots, [0, 0.5, 1])
    np.testing.assert_allclose(basis.gram, np.diag([0.5, 0.5]), atol=1e-14)


def test_linear_hats():
    basis = build_basis((0.0, 1.0), 1, 0, [0.3, 0.7])
    np.testing.assert_allclose(evaluate(basis, 0.0), [1, 0])
    np.testing.assert_allclose(evaluate(basis, 0.5), [0.5, 0.5])
    # integral of t^2, t(1-t), (1-t)^2
    np.testing.assert_allclose(basis.gram, [[1 / 3, 1 / 6], [1 / 6, 1 / 3]], atol=1e-14)


def test_quantile_knots():
    times = np.linspace(9, 16, 3001)
    basis = build_basis((9, 16), 2, 2, times)
    np.testing.assert_allclose(basis.interior_knots, [9 + 7 / 3, 9 + 14 / 3], atol=1e-12)
    assert basis.dim == 5


def test_partition_of_unity_and_support():
    rng = np.random.default_rng(1)
    basis = build_basis((9, 16), 3, 4, rng.uniform(9, 16, 300))
    t = rng.uniform(9, 16, 1000)
    d = basis.design(t)
    np.testing.assert_allclose(d.sum(axis=1), 1.0, atol=1e-10)
    assert np.all(d >= 0)
    assert np.all((d > 0).sum(axis=1) <= basis.degree + 1)


def test_gram_invariants():
    basis = build_basis((9, 16), 2, 3, np.random.default_rng(2).uniform(9, 16, 200))
    assert np.allclose(basis.gram, basis.gram.T, atol=1e-10)
    assert np.linalg.eigvalsh(basis.gram)[0] > 0
    np.testing.assert_allclose(basis.gram_half.T @ basis.gram_half, basis.gram, atol=1e-8)
    np.testing.assert_allclose(basis.gram_half @ basis.gram_half_inv, np.eye(basis.dim), atol=1e-10)


def test_gram_against_adaptive_quadrature():
    basis = basis_from_knots((9, 16), 2, [11.0, 13.56])
    for i in range(basis.dim):
        for j in range(i, basis.dim):
            val = quad(lambda t: evaluate(basis, t)[i] * evaluate(basis, t)[j], 9, 16,
                       points=[11.0, 13.56], epsabs=1e-13, epsrel=1e-13)[0]
            assert abs(val - basis.gram[i, j]) < 1e-10
        val = quad(lambda t: evaluate(basis, t)[i], 9, 16, points=[11.0, 13.56], epsabs=1e-13)[0]
        assert abs(val - basis.integrals[i]) < 1e-10


@pytest.mark.parametrize("degree", [0, 1, 2, 3, 4])
def test_quadrature_exactness(degree):
    knots = [0.13, 0.4, 0.41, 0.8]
    exact = basis_from_knots((0, 1), degree, knots)
    fine = basis_from_knots((0, 1), degree, knots, quad_nodes=10 * gram_nodes(degree))
    np.testing.assert_allclose(exact.gram, fine.gram, atol=1e-10, rtol=0)
    assert gram_nodes(degree) >= degree + 1


def test_domain_tolerance():
    basis = basis_from_knots((9, 16), 2, [12.0])
    np.testing.assert_allclose(evaluate(basis, 16 + 1e-13), evaluate(basis, 16.0))
    with pytest.raises(DomainError):
        evaluate(basis, 16.001)
    with pytest.raises(DomainError):
        basis.design([8.9])


def test_degenerate_knot_placement():
    with pytest.raises(DegeneracyError):
        build_basis((0, 1), 2, 2, [0.5] * 10)
    # heavy ties produce duplicate quantile knots
    times = np.r_[np.full(50, 0.3), [0.1, 0.9]]
    with pytest.raises(DegeneracyError):
        build_basis((0, 1), 2, 3, times)


def test_orthogonalize_normalizes():
    basis = basis_from_knots((0, 1), 2, [0.5])
    v = np.array([1.0, 2.0, -1.0, 0.5])
    v2 = 2 * v / basis.norm(v)
    np.testing.assert_allclose(orthogonalize(basis, v2), v2 / 2, atol=1e-14)


def test_orthogonalize_against_previous():
    rng = np.random.default_rng(3)
    basis = build_basis((9, 16), 2, 3, rng.uniform(9, 16, 100))
    p = orthogonalize(basis, rng.normal(size=basis.dim))
    v = orthogonalize(basis, rng.normal(size=basis.dim), [p])
    assert abs(v @ basis.gram @ p) < 1e-10
    assert abs(v @ basis.gram @ v - 1) < 1e-10
    again = orthogonalize(basis, v, [p])
    assert basis.norm(again - v) < 1e-12
    with pytest.raises(DegeneracyError):
        orthogonalize(basis, 3 * p, [p])


@settings(max_examples=40, deadline=None)
@given(
    degree=st.integers(0, 3),
    knots=st.lists(st.floats(0.05, 0.95), min_size=0, max_size=4, unique=True),
    seed=st.integers(0, 2 ** 31),
)
def test_norm_equals_integral_of_square(degree, knots, seed):
    knots = sorted(knots)
    if np.any(np.diff(knots) < 1e-3):
        return
    basis = basis_from_knots((0, 1), degree, knots)
    coef = np.random.default_rng(seed).normal(size=basis.dim)
    t = np.linspace(0, 1, 20001)
    f = basis.functions(coef, t)
    trap = np.sum((f[1:] ** 2 + f[:-1] ** 2) / 2) * (t[1] - t[0])
    assert abs(basis.norm(coef) ** 2 - trap) < 1e-3 * max(1.0, trap)
    row = basis.design(np.random.default_rng(seed).uniform(0, 1, 5))
    np.testing.assert_allclose(row.sum(axis=1), 1, atol=1e-10)
