from __future__ import annotations

import math
import unittest

import numpy as np

from triple_homog.cell import CellFunction
from triple_homog.errors import SeriesDivergenceError, SpectralPoleError
from triple_homog.medium import dirichlet_eigenvalues
from triple_homog.models import Medium
from triple_homog.triple import (
    BASIS,
    adjoint_via_trace,
    apply_expression,
    dirichlet_resolvent,
    green_identity_defect,
    lambda_eigen,
    lambda_matrix,
    lift,
    m_matrix,
    m_series_truncation,
    neumann_trace,
    solution_operator,
    solution_operator_adjoint,
)

MEDIUM = Medium(1.0, 4.0, 0.5)


def _datum(grid, chi: float) -> CellFunction:
    return CellFunction.from_callable(grid, lambda y: np.exp(-1j * chi * y) * (1.0 + np.cos(2.0 * np.pi * y) + 0.5j * y))


class LambdaTests(unittest.TestCase):
    def test_lambda_is_hermitian_with_given_eigenpairs(self) -> None:
        chi = 0.8
        lam = lambda_matrix(MEDIUM, chi)
        np.testing.assert_allclose(lam, lam.conj().T, atol=1e-14)
        eigen = lambda_eigen(MEDIUM, chi)
        np.testing.assert_allclose(lam @ eigen.psi_parallel, eigen.mu_parallel * eigen.psi_parallel, atol=1e-12)
        np.testing.assert_allclose(lam @ eigen.psi_perp, eigen.mu_perp * eigen.psi_perp, atol=1e-12)
        self.assertGreater(eigen.mu_parallel, eigen.mu_perp)

    def test_balanced_medium_values(self) -> None:
        balanced = Medium(1.0, 1.0, 0.5)
        np.testing.assert_allclose(lambda_matrix(balanced, 0.0), [[-4.0, 4.0], [4.0, -4.0]], atol=1e-14)
        at_zero = lambda_eigen(balanced, 0.0)
        self.assertAlmostEqual(at_zero.mu_parallel, 0.0, places=14)
        np.testing.assert_allclose(at_zero.psi_parallel, np.array([1.0, 1.0]) / math.sqrt(2.0), atol=1e-14)
        self.assertAlmostEqual(lambda_eigen(balanced, math.pi / 2).mu_parallel, -4.0 + 4.0 * math.cos(math.pi / 4), places=12)

    def test_m_matrix_at_zero_is_lambda(self) -> None:
        chi = 1.7
        np.testing.assert_allclose(m_matrix(MEDIUM, chi, 0.0).matrix, lambda_matrix(MEDIUM, chi), atol=1e-12)

    def test_m_matrix_hermitian_for_real_z(self) -> None:
        m = m_matrix(MEDIUM, 0.4, 12.5).matrix
        np.testing.assert_allclose(m, m.conj().T, atol=1e-12)

    def test_m_matrix_eigenvalues_increase_below_the_first_pole(self) -> None:
        top = 0.95 * dirichlet_eigenvalues(MEDIUM, 1)[0]
        values = np.array([np.linalg.eigvalsh(m_matrix(MEDIUM, 0.4, z).matrix) for z in np.linspace(-20.0, top, 40)])
        self.assertTrue(np.all(np.diff(values, axis=0) >= -1e-9))

    def test_m_matrix_at_a_pole_raises(self) -> None:
        with self.assertRaises(SpectralPoleError):
            m_matrix(MEDIUM, 0.4, dirichlet_eigenvalues(MEDIUM, 1)[0])


class LiftTests(unittest.TestCase):
    def setUp(self) -> None:
        self.grid = MEDIUM.grid(512)

    def test_lift_takes_the_vertex_values(self) -> None:
        phi = np.array([1.0 - 0.5j, 0.25j])
        np.testing.assert_allclose(lift(MEDIUM, 0.9, phi, self.grid).vertex_values(), phi, atol=1e-14)

    def test_neumann_trace_of_lift_is_lambda(self) -> None:
        chi = 0.9
        phi = np.array([1.0, 2.0 - 1.0j])
        traced = neumann_trace(MEDIUM, chi, lift(MEDIUM, chi, phi, self.grid))
        np.testing.assert_allclose(traced, lambda_matrix(MEDIUM, chi) @ phi, rtol=1e-10, atol=1e-10)

    def test_gauge_constant_has_no_flux(self) -> None:
        chi = 1.3
        u = CellFunction.from_callable(
            self.grid, lambda y: np.exp(-1j * chi * y), lambda y: -1j * chi * np.exp(-1j * chi * y)
        )
        np.testing.assert_allclose(neumann_trace(MEDIUM, chi, u), [0.0, 0.0], atol=1e-12)

    def test_solution_operator_keeps_vertex_data(self) -> None:
        phi = np.array([0.4 - 1.0j, 2.0])
        u = solution_operator(MEDIUM, 0.9, -1.0, phi, self.grid)
        np.testing.assert_array_equal(u.vertex_values(), phi)

    def test_adjoint_pairing(self) -> None:
        chi, z = 0.9, complex(-1.0, 0.4)
        f = _datum(self.grid, chi)
        phi = np.array([1.0 + 0.5j, -0.3j])
        adjoint = solution_operator_adjoint(MEDIUM, chi, z, f)
        direct = f.inner(solution_operator(MEDIUM, chi, np.conj(z), phi, self.grid))
        self.assertAlmostEqual(abs(direct - np.vdot(phi, adjoint)), 0.0, places=12)

    def test_dirichlet_resolvent_vanishes_at_vertices(self) -> None:
        u = dirichlet_resolvent(MEDIUM, 0.6, -1.0, _datum(self.grid, 0.6))
        np.testing.assert_allclose(u.vertex_values(), [0.0, 0.0], atol=1e-14)

    def test_dirichlet_resolvent_solves_the_equation(self) -> None:
        chi, z = 0.6, -1.0
        f = _datum(self.grid, chi)
        u = dirichlet_resolvent(MEDIUM, chi, z, f)
        left, right = apply_expression(MEDIUM, chi, u)
        np.testing.assert_allclose(left - z * u.left[1:-1], f.left[1:-1], atol=1e-3)
        np.testing.assert_allclose(right - z * u.right[1:-1], f.right[1:-1], atol=1e-3)

    def test_green_identity(self) -> None:
        chi = 0.7
        f = _datum(self.grid, chi)
        u = lift(MEDIUM, chi, np.array([1.0, 0.5j]), self.grid)
        v = dirichlet_resolvent(MEDIUM, chi, 0.0, f)
        defect = green_identity_defect(MEDIUM, chi, u, CellFunction.zeros(self.grid), v, f)
        self.assertLess(abs(defect), 1e-7)

    def test_adjoint_routes_agree(self) -> None:
        chi = 1.1
        f = _datum(self.grid, chi)
        for z in (-1.0, complex(-2.0, 0.5)):
            np.testing.assert_allclose(
                solution_operator_adjoint(MEDIUM, chi, z, f), adjoint_via_trace(MEDIUM, chi, z, f), rtol=1e-7
            )


class SeriesTests(unittest.TestCase):
    def setUp(self) -> None:
        self.grid = MEDIUM.grid(512)
        self.radius = dirichlet_eigenvalues(MEDIUM, 1)[0]

    def test_truncated_series_matches_closed_form(self) -> None:
        z = 0.1 * self.radius
        series = m_series_truncation(MEDIUM, 0.9, z, 12, self.grid).matrix
        closed = m_matrix(MEDIUM, 0.9, z).matrix
        np.testing.assert_allclose(series, closed, rtol=1e-7, atol=1e-7)

    def test_series_outside_radius_raises(self) -> None:
        with self.assertRaises(SeriesDivergenceError):
            m_series_truncation(MEDIUM, 0.9, 1.01 * self.radius, 4, self.grid)

    def test_neumann_route_matches_direct(self) -> None:
        z = 0.2 * self.radius
        direct = solution_operator(MEDIUM, 0.5, z, BASIS[1], self.grid)
        neumann = solution_operator(MEDIUM, 0.5, z, BASIS[1], self.grid, method="neumann")
        self.assertLess((direct - neumann).norm() / direct.norm(), 1e-7)
        with self.assertRaises(ValueError):
            solution_operator(MEDIUM, 0.5, z, BASIS[1], self.grid, method="series")

    def test_solution_operator_is_lift_at_zero(self) -> None:
        phi = np.array([0.3, 1.0j])
        s = solution_operator(MEDIUM, 2.0, 0.0, phi, self.grid)
        self.assertLess((s - lift(MEDIUM, 2.0, phi, self.grid)).norm(), 1e-14)
        self.assertTrue(math.isfinite(s.norm()))


if __name__ == "__main__":
    unittest.main()
