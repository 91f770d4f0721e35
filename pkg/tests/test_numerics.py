import numpy as np
import pytest
from scipy.special import hyp1f1

from errors import DomainError, NotPositiveDefinite
from numerics import (hermitian_factor, hermitian_solve, kummer_m, log_kummer_m,
                      principal_eigenvector, principal_eigenvectors)


class TestHermitianFactor:
    def test_solve_matches_dense(self, rng, make_pd):
        A = make_pd(rng, 5)
        b = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
        x = hermitian_solve(A, b)
        np.testing.assert_allclose(A @ x, b, rtol=1e-7, atol=1e-7)

    def test_logdet_and_quadratic(self, rng, make_pd):
        A = make_pd(rng, 4)
        factor = hermitian_factor(A)
        _, logdet = np.linalg.slogdet(A)
        assert factor.logdet() == pytest.approx(logdet, rel=1e-8)

        x = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
        expected = np.einsum('in,ij,jn->n', x.conj(), np.linalg.inv(A), x).real
        np.testing.assert_allclose(factor.quadratic(x), expected, rtol=1e-7)

    def test_rank_one_matrix_is_loaded(self, rng):
        v = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        factor = hermitian_factor(np.outer(v, v.conj()))
        assert factor.loading > 0
        assert np.all(np.isfinite(factor.lower))

    def test_well_conditioned_matrix_is_not_loaded(self, rng, make_pd):
        assert hermitian_factor(make_pd(rng, 4)).loading == 0.0

    def test_strict_factor_rejects_rank_one(self, rng):
        v = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        with pytest.raises(NotPositiveDefinite):
            hermitian_factor(np.outer(v, v.conj()), allow_loading=False)

    @pytest.mark.parametrize("dim", range(1, 9))
    def test_solve_residual(self, rng, make_pd, dim):
        A = make_pd(rng, dim)
        b = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        x = hermitian_solve(A, b)
        assert np.linalg.norm(A @ x - b) <= 1e-9 * np.linalg.norm(b)

    @pytest.mark.parametrize("matrix", [-np.eye(3), np.diag([1.0, -1.0])])
    def test_indefinite_matrix_raises(self, matrix):
        with pytest.raises(NotPositiveDefinite):
            hermitian_factor(matrix)


class TestPrincipalEigenvector:
    def test_matches_eigh(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5)))
        A = (q * np.array([5.0, 2.0, 1.0, 0.5, 0.1])) @ q.conj().T
        v = principal_eigenvector(A)
        w = np.linalg.eigh(A)[1][:, -1]
        assert abs(np.vdot(w, v)) == pytest.approx(1.0, abs=1e-8)
        rho = np.vdot(v, A @ v).real
        assert np.linalg.norm(A @ v - rho * v) < 1e-8 * np.linalg.norm(A)

    def test_first_entry_real_positive(self, rng, make_pd):
        v = principal_eigenvector(make_pd(rng, 4))
        assert v[0].imag == 0.0
        assert v[0].real > 0
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)

    def test_rank_one(self, rng):
        d = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
        v = principal_eigenvector(np.outer(d, d.conj()))
        assert abs(np.vdot(d / np.linalg.norm(d), v)) == pytest.approx(1.0, abs=1e-10)

    def test_zero_matrix(self):
        np.testing.assert_array_equal(principal_eigenvector(np.zeros((3, 3))), [1, 0, 0])

    def test_largest_algebraic_eigenvalue(self):
        v = principal_eigenvector(np.diag([-1.0, -3.0]))
        np.testing.assert_allclose(np.abs(v), [1.0, 0.0], atol=1e-10)

    def test_repeated_calls_are_bitwise_identical(self, rng, make_pd):
        A = make_pd(rng, 4)
        np.testing.assert_array_equal(principal_eigenvector(A), principal_eigenvector(A))

    def test_diagonal_picks_largest_entry(self):
        np.testing.assert_array_equal(principal_eigenvector(np.diag([1.0, 5.0, 2.0])), [0, 1, 0])

    def test_batch_matches_single(self, rng, make_pd):
        stack = np.stack([make_pd(rng, 3) for _ in range(4)]).reshape(2, 2, 3, 3)
        batch = principal_eigenvectors(stack)
        assert batch.shape == (2, 2, 3)
        for i in range(2):
            for j in range(2):
                np.testing.assert_allclose(batch[i, j], principal_eigenvector(stack[i, j]), atol=1e-9)


class TestKummer:
    @pytest.mark.parametrize("a", [0.25, 1.0, 2.5])
    def test_equal_parameters_give_exponential(self, a):
        x = np.array([0.0, 0.5, 10.0, 29.99, 30.0, 60.0, 200.0])
        np.testing.assert_allclose(log_kummer_m(a, a, x), x, rtol=1e-10, atol=1e-10)

    def test_closed_form_one_two(self):
        x = np.array([0.1, 5.0, 29.0, 31.0, 100.0])
        np.testing.assert_allclose(log_kummer_m(1.0, 2.0, x), np.log(np.expm1(x) / x), rtol=1e-10)

    @pytest.mark.parametrize("a,b", [(1.25, 2.0), (0.25, 1.0)])
    def test_matches_scipy(self, a, b):
        x = np.array([0.3, 3.0, 20.0, 40.0, 80.0])
        np.testing.assert_allclose(kummer_m(a, b, x), hyp1f1(a, b, x), rtol=1e-7)

    @pytest.mark.parametrize("a,b,closed_form", [
        (2.0, 1.0, lambda x: np.log1p(x) + x),
        (3.0, 2.0, lambda x: np.log1p(x / 2) + x),
        (1.0, 3.0, lambda x: np.log(2.0) + np.log(np.expm1(x) - x) - 2 * np.log(x)),
    ])
    def test_closed_forms(self, a, b, closed_form):
        x = np.array([0.5, 5.0, 29.0, 31.0, 60.0, 200.0])
        np.testing.assert_allclose(log_kummer_m(a, b, x), closed_form(x), rtol=1e-10)

    @pytest.mark.parametrize("a,b", [(1.25, 2.0), (2.0, 1.5), (1.5, 4.0)])
    def test_contiguous_recurrence(self, a, b):
        # (b - a) M(a - 1) + (2a - b + x) M(a) - a M(a + 1) = 0
        x = np.array([0.5, 5.0, 29.0, 40.0, 60.0, 200.0])
        terms = np.stack([(b - a) * kummer_m(a - 1, b, x),
                          (2 * a - b + x) * kummer_m(a, b, x),
                          -a * kummer_m(a + 1, b, x)])
        residual = np.abs(terms.sum(axis=0)) / np.abs(terms).sum(axis=0)
        assert np.all(residual <= 1e-10)

    def test_continuous_at_crossover(self):
        below, above = log_kummer_m(1.25, 2.0, np.array([30.0 - 1e-9, 30.0]))
        assert below == pytest.approx(above, rel=1e-8)

    def test_large_argument_stays_finite(self):
        assert np.isfinite(log_kummer_m(1.25, 2.0, 1e12))
        assert np.isfinite(log_kummer_m(0.25, 1.0, 1e12))

    def test_scalar_in_scalar_out(self):
        value = kummer_m(1.0, 1.0, 2.0)
        assert isinstance(value, float)
        assert value == pytest.approx(np.exp(2.0), rel=1e-13)

    @pytest.mark.parametrize("a,b,x", [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, -0.5), (1.0, 1.0, np.nan)])
    def test_domain_errors(self, a, b, x):
        with pytest.raises(DomainError):
            kummer_m(a, b, x)
