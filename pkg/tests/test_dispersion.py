from __future__ import annotations

import math
import unittest

import numpy as np

from triple_homog.dispersion import (
    band_eigenvalues,
    band_edges,
    dispersion_residual,
    lowest_eigenvalue,
    monodromy_discriminant,
    monodromy_matrix,
    transfer_matrix,
)
from triple_homog.models import Medium

CONTRAST = Medium(1.0, 4.0, 0.5)
UNIFORM = Medium(1.0, 1.0, 0.5)


class MonodromyTests(unittest.TestCase):
    def test_transfer_matrix_is_unimodular(self) -> None:
        for a, length, k in ((1.0, 0.5, 3.0), (4.0, 0.25, 7.5), (2.5, 0.8, 0.0)):
            self.assertAlmostEqual(float(np.linalg.det(transfer_matrix(a, length, k))), 1.0, places=12)

    def test_uniform_discriminant_is_twice_cosine(self) -> None:
        for k in (0.0, 1.0, 2.5, 9.0):
            self.assertAlmostEqual(monodromy_discriminant(UNIFORM, k), 2.0 * math.cos(k), places=12)

    def test_residual_matches_discriminant(self) -> None:
        for chi in (0.3, 2.0):
            for k in (0.5, 2.0, 6.0):
                expected = float(np.trace(monodromy_matrix(CONTRAST, k))) - 2.0 * math.cos(chi)
                self.assertAlmostEqual(float(dispersion_residual(CONTRAST, chi, k)), expected, places=10)

    def test_negative_wavenumber_rejected(self) -> None:
        with self.assertRaises(ValueError):
            monodromy_discriminant(CONTRAST, -1.0)


class LowestEigenvalueTests(unittest.TestCase):
    def test_uniform_medium_is_free_dispersion(self) -> None:
        for chi in (0.1, 1.0, 2.5):
            self.assertAlmostEqual(lowest_eigenvalue(UNIFORM, chi) / chi**2, 1.0, places=10)

    def test_routes_agree(self) -> None:
        monodromy = lowest_eigenvalue(CONTRAST, 1.0, method="monodromy")
        through_m = lowest_eigenvalue(CONTRAST, 1.0, method="m_matrix")
        self.assertLess(abs(monodromy - through_m) / monodromy, 1e-10)

    def test_zero_quasimomentum(self) -> None:
        self.assertEqual(lowest_eigenvalue(CONTRAST, 0.0), 0.0)
        self.assertEqual(lowest_eigenvalue(CONTRAST, 2.0 * math.pi), 0.0)

    def test_even_in_quasimomentum(self) -> None:
        for chi in (0.3, 1.9):
            self.assertAlmostEqual(lowest_eigenvalue(CONTRAST, -chi) / lowest_eigenvalue(CONTRAST, chi), 1.0, places=10)
        grid = CONTRAST.grid(64)
        forward = band_eigenvalues(CONTRAST, 0.7, 4, grid).eigenvalues
        backward = band_eigenvalues(CONTRAST, -0.7, 4, grid).eigenvalues
        np.testing.assert_allclose(backward, forward, rtol=1e-10)

    def test_unknown_route(self) -> None:
        with self.assertRaises(ValueError):
            lowest_eigenvalue(CONTRAST, 1.0, method="shooting")


class BandTests(unittest.TestCase):
    def test_uniform_band_is_shifted_lattice(self) -> None:
        chi = 0.5
        band = band_eigenvalues(UNIFORM, chi, 4, UNIFORM.grid(512))
        expected = np.sort((2.0 * np.pi * np.array([0, -1, 1, -2]) + chi) ** 2)
        np.testing.assert_allclose(band.eigenvalues, expected, rtol=1e-9)
        self.assertEqual(len(band.eigenfunctions), 4)

    def test_eigenfunctions_are_orthonormal(self) -> None:
        grid = CONTRAST.grid(512)
        band = band_eigenvalues(CONTRAST, 0.7, 4, grid)
        gram = np.array([[f.inner(g) for g in band.eigenfunctions] for f in band.eigenfunctions])
        np.testing.assert_allclose(gram, np.eye(4), atol=1e-5)

    def test_double_eigenvalue_at_a_pole(self) -> None:
        band = band_eigenvalues(UNIFORM, 0.0, 3, UNIFORM.grid(256))
        np.testing.assert_allclose(band.eigenvalues, [0.0, 4 * math.pi**2, 4 * math.pi**2], atol=1e-9)

    def test_count_must_be_positive(self) -> None:
        with self.assertRaises(ValueError):
            band_eigenvalues(CONTRAST, 0.7, 0)

    def test_band_edges_are_ordered(self) -> None:
        edges = band_edges(CONTRAST, 3, cells=128)
        self.assertEqual(edges[0][0], 0.0)
        for (lo, hi), (next_lo, _) in zip(edges, edges[1:]):
            self.assertLessEqual(lo, hi)
            self.assertLessEqual(hi, next_lo + 1e-9)


if __name__ == "__main__":
    unittest.main()
