from __future__ import annotations

import math
import unittest
from unittest import mock

import numpy as np

from triple_homog.cell import CellFunction
from triple_homog.dispersion import band_eigenvalues
from triple_homog.errors import SpectralPoleError
from triple_homog.homogenisation import effective_fibre, parallel_lift, theta_projection
from triple_homog.medium import dirichlet_eigenvalues
from triple_homog import resolvent as resolvent_module
from triple_homog.models import Medium, SweepRecord
from triple_homog.resolvent import (
    CellOperator,
    admissible_z,
    chi_samples,
    first_order_factor,
    first_order_resolvent,
    fit_rate,
    krein_operator,
    krein_resolvent,
    operator_norm_diff,
    power_iteration_norm,
    resolvent_error_at,
    resolvent_error_cell,
    resolvent_error_experiment,
    resolvent_errors_at,
    second_order_error_experiment,
    second_order_exponent,
    second_order_factor,
    second_order_resolvent,
    spectral_distance_experiment,
    spectral_resolvent,
    theta_operator,
)

CONTRAST = Medium(1.0, 4.0, 0.5)
UNIFORM = Medium(1.0, 1.0, 0.5)


def _datum(grid, chi: float) -> CellFunction:
    return CellFunction.from_callable(grid, lambda y: np.exp(-1j * chi * y) * (1.0 + np.cos(2.0 * np.pi * y) + 0.5j * y))


class KreinTests(unittest.TestCase):
    def setUp(self) -> None:
        self.grid = CONTRAST.grid(512)

    def test_bloch_eigenfunction_is_scaled(self) -> None:
        chi, z = 1.0, -1.0
        band = band_eigenvalues(CONTRAST, chi, 2, self.grid)
        phi = band.eigenfunctions[0]
        out = krein_resolvent(CONTRAST, chi, z, phi)
        expected = (1.0 / (band.eigenvalues[0] - z)) * phi
        self.assertLess((out - expected).norm() / expected.norm(), 1e-7)

    def test_dense_operator_matches_pointwise_formula(self) -> None:
        chi, z = 0.7, complex(-1.0, 0.3)
        grid = CONTRAST.grid(128)
        f = _datum(grid, chi)
        applied = krein_operator(CONTRAST, chi, z, grid).apply(f)
        direct = krein_resolvent(CONTRAST, chi, z, f)
        np.testing.assert_allclose(applied.vector, direct.vector, rtol=1e-9, atol=1e-12)

    def test_resolvent_identity(self) -> None:
        chi, z1, z2 = 0.9, -1.0, complex(-2.0, 0.5)
        grid = CONTRAST.grid(256)
        r1 = krein_operator(CONTRAST, chi, z1, grid)
        r2 = krein_operator(CONTRAST, chi, z2, grid)
        difference = r1 - r2
        product = (z1 - z2) * CellOperator(grid, r1.matrix @ r2.matrix)
        self.assertLess((difference - product).norm() / difference.norm(), 1e-3)

    def test_dirichlet_eigenvalue_is_rejected(self) -> None:
        with self.assertRaises(SpectralPoleError):
            krein_resolvent(CONTRAST, 0.5, dirichlet_eigenvalues(CONTRAST, 1)[0], _datum(self.grid, 0.5))

    def test_mode_sum_is_exact_inside_the_band(self) -> None:
        chi = 0.5
        band = band_eigenvalues(UNIFORM, chi, 3, UNIFORM.grid(256))
        f = band.eigenfunctions[0] + 0.5j * band.eigenfunctions[2]
        out, tail = spectral_resolvent(band, -2.0, f)
        expected = (1.0 / (band.eigenvalues[0] + 2.0)) * band.eigenfunctions[0] + (
            0.5j / (band.eigenvalues[2] + 2.0)
        ) * band.eigenfunctions[2]
        self.assertLess((out - expected).norm(), 1e-6)
        self.assertLess(tail, 1e-5)


class ApproximantTests(unittest.TestCase):
    def test_first_order_factor_pole(self) -> None:
        self.assertAlmostEqual(abs(first_order_factor(2.0, 0.5, -1.0)), 1.0 / 9.0, places=14)
        with self.assertRaises(SpectralPoleError):
            first_order_factor(2.0, 1.0, 2.0)

    def test_first_order_acts_on_the_lift_only(self) -> None:
        chi, eps, z = 0.6, 0.1, -1.0
        grid = CONTRAST.grid(256)
        g = parallel_lift(CONTRAST, chi, grid)
        out = first_order_resolvent(CONTRAST, chi, eps, z, g)
        factor = first_order_factor(effective_fibre(CONTRAST, chi, 512).a_hom, eps, z)
        self.assertLess((out - factor * g).norm() / abs(factor), 1e-10)
        f = _datum(grid, chi)
        orthogonal = f - theta_projection(CONTRAST, chi, f)
        self.assertLess(first_order_resolvent(CONTRAST, chi, eps, z, orthogonal).norm(), 1e-10)

    def test_second_order_vanishes_off_the_lift(self) -> None:
        chi, eps, z = 0.6, 0.1, -1.0
        grid = CONTRAST.grid(256)
        f = _datum(grid, chi)
        orthogonal = f - theta_projection(CONTRAST, chi, f)
        self.assertLess(second_order_resolvent(CONTRAST, chi, eps, z, orthogonal, cells=512).norm(), 1e-10)

    def test_second_order_not_worse_at_small_quasimomentum(self) -> None:
        eps, z = 0.125, -1.0
        grid = CONTRAST.grid(64)
        for chi in (eps, eps**0.75):
            first, second = resolvent_errors_at(CONTRAST, chi, eps, z, grid, cells=512)
            with self.subTest(chi=chi):
                self.assertLessEqual(second, first)
                self.assertEqual(resolvent_error_at(CONTRAST, chi, eps, z, grid, "first", cells=512), first)

    def test_second_order_factor_is_corner_of_inverse(self) -> None:
        fibre = effective_fibre(CONTRAST, 0.5, 512)
        for eps, z in ((0.1, -1.0), (0.05, complex(2.0, 1.0))):
            inverse = np.linalg.inv(fibre.second_order / eps**2 - 0.5 * z * np.eye(2))
            self.assertLess(abs(second_order_factor(fibre, eps, z) - inverse[0, 0]) / abs(inverse[0, 0]), 1e-10)

    def test_second_order_reduces_to_first_order(self) -> None:
        fibre = effective_fibre(CONTRAST, 0.5, 512)
        eps, z = 1e-3, -1.0
        first = first_order_factor(fibre.a_hom, eps, z)
        second = second_order_factor(fibre, eps, z)
        self.assertLess(abs(second - first) / abs(first), 1e-3)


class NormTests(unittest.TestCase):
    def test_projection_has_unit_norm(self) -> None:
        grid = CONTRAST.grid(64)
        theta = theta_operator(CONTRAST, 0.8, grid)
        self.assertAlmostEqual(theta.norm(), 1.0, places=10)
        np.testing.assert_allclose(theta.matrix @ theta.matrix, theta.matrix, atol=1e-12)

    def test_difference_with_itself_vanishes(self) -> None:
        grid = CONTRAST.grid(64)
        theta = theta_operator(CONTRAST, 0.8, grid)
        self.assertEqual(operator_norm_diff(theta, theta), 0.0)

    def test_power_iteration_matches_svd(self) -> None:
        grid = CONTRAST.grid(32)
        values = np.linspace(0.1, 1.0, grid.size)
        values[3] = 3.0
        op = CellOperator(grid, np.diag(values).astype(complex))
        self.assertAlmostEqual(op.norm(), 3.0, places=10)
        self.assertAlmostEqual(power_iteration_norm(op), 3.0, places=8)
        self.assertAlmostEqual(operator_norm_diff(op, 0.0 * op, cross_check=True), 3.0, places=10)

    def test_large_grids_use_power_iteration(self) -> None:
        grid = CONTRAST.grid(32)
        values = np.linspace(0.1, 1.0, grid.size)
        values[5] = 2.0
        op = CellOperator(grid, np.diag(values).astype(complex))
        with mock.patch("triple_homog.resolvent.power_iteration_norm", return_value=2.0) as power:
            self.assertEqual(operator_norm_diff(op, 0.0 * op, dense_limit=8), 2.0)
        power.assert_called_once()
        self.assertAlmostEqual(operator_norm_diff(op, 0.0 * op, dense_limit=8), 2.0, places=8)

    def test_grid_mismatch(self) -> None:
        a = theta_operator(CONTRAST, 0.8, CONTRAST.grid(32))
        b = theta_operator(CONTRAST, 0.8, CONTRAST.grid(64))
        with self.assertRaises(ValueError):
            a - b


class ExperimentTests(unittest.TestCase):
    def test_spectral_distance_is_quartic(self) -> None:
        _, slope = spectral_distance_experiment(CONTRAST, np.geomspace(1e-2, 1e-1, 5))
        self.assertLess(abs(slope - 4.0), 0.2)

    def test_exponents(self) -> None:
        self.assertAlmostEqual(second_order_exponent(1.0), 1.0)
        self.assertAlmostEqual(second_order_exponent(2.0), 2.0 / 3.0)
        self.assertAlmostEqual(second_order_exponent(0.5), 2.5 / 3.0)

    def test_fit_rate(self) -> None:
        records = [SweepRecord(eps=e, err_first=3.0 * e**2) for e in (0.1, 0.05, 0.01)]
        slope, constant = fit_rate(records, "err_first")
        self.assertAlmostEqual(slope, 2.0, places=10)
        self.assertAlmostEqual(constant, 3.0, places=8)

    def test_chi_samples_skip_degenerate_points(self) -> None:
        chis = chi_samples(UNIFORM, 0.05, 8, 0.75, 1e-6)
        self.assertEqual(chis, sorted(chis))
        self.assertTrue(all(0.0 < c < math.pi for c in chis))
        self.assertIn(math.pi, chi_samples(CONTRAST, 0.05, 8, 0.75, 1e-6))

    def test_admissible_z(self) -> None:
        self.assertEqual(admissible_z("fixed", "first", 0.1, 1.5, complex(-1.0, 0.5)), [complex(-1.0, 0.5)])
        self.assertAlmostEqual(admissible_z("scaled", "first", 1.0 / 16.0, 1.5)[0].real, -2.0, places=12)
        self.assertAlmostEqual(admissible_z("scaled", "second", 0.125, 1.0)[0].real, -8.0, places=12)
        self.assertNotEqual(admissible_z("scaled", "first", 0.125, 1.0), admissible_z("scaled", "first", 0.125, 1.9))
        sweep = admissible_z("sweep", "second", 0.125, 1.0, points=4)
        np.testing.assert_allclose([-z.real for z in sweep], [1.0, 2.0, 4.0, 8.0], rtol=1e-12)
        with self.assertRaises(ValueError):
            admissible_z("spiral", "first", 0.1, 1.0)
        with self.assertRaises(ValueError):
            admissible_z("scaled", "third", 0.1, 1.0)

    def test_first_order_sweep_uses_the_scaled_z(self) -> None:
        eps_grid = [0.25, 0.125]
        records, slope = resolvent_error_experiment(
            CONTRAST, 1.5, eps_grid, z_rule="scaled", norm_cells=32, cells=256, outer_points=4
        )
        self.assertEqual([r.eps for r in records], eps_grid)
        for r in records:
            self.assertAlmostEqual(r.z.real, -(r.eps**-0.25), places=12)
            self.assertEqual(r.z.imag, 0.0)
            self.assertGreater(r.err_first, 0.0)
            self.assertTrue(0.0 < r.chi <= math.pi)
        self.assertTrue(math.isfinite(slope))

    def test_second_order_sweep_reports_the_worst_z(self) -> None:
        eps_grid = [0.25, 0.125]
        records, slope = second_order_error_experiment(
            CONTRAST, 1.0, eps_grid, z_rule="sweep", z_points=3, norm_cells=32, cells=256, outer_points=4
        )
        for r in records:
            self.assertIn(r.z, admissible_z("sweep", "second", r.eps, 1.0, points=3))
            self.assertGreater(r.err_second, 0.0)
        self.assertTrue(math.isfinite(slope))

    def test_first_order_cell_builds_second_order_once(self) -> None:
        with mock.patch.object(
            resolvent_module, "second_order_operator", wraps=resolvent_module.second_order_operator
        ) as second, mock.patch.object(
            resolvent_module, "first_order_operator", wraps=resolvent_module.first_order_operator
        ) as first:
            record = resolvent_error_cell(CONTRAST, 0.25, 1.0, [complex(-1.0)], "first", 32, 256, 4, 1e-6)
        self.assertEqual(second.call_count, 1)
        self.assertGreater(first.call_count, 2)
        self.assertGreater(record.err_first, 0.0)
        self.assertGreater(record.err_second, 0.0)

    def test_alpha_ranges(self) -> None:
        with self.assertRaises(ValueError):
            resolvent_error_experiment(CONTRAST, 2.0, [0.1])
        with self.assertRaises(ValueError):
            second_order_error_experiment(CONTRAST, 4.5, [0.1])


if __name__ == "__main__":
    unittest.main()
