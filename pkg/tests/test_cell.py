from __future__ import annotations

import unittest

import numpy as np

from triple_homog.cell import CellFunction, CellGrid


def _square(grid: CellGrid) -> CellFunction:
    return CellFunction.from_callable(grid, lambda y: y**2 + 0j, lambda y: 2.0 * y + 0j)


class CellGridTests(unittest.TestCase):
    def test_pieces_meet_at_the_interface(self) -> None:
        grid = CellGrid.for_interface(0.3, 64)
        self.assertEqual(grid.y_left[-1], 0.3)
        self.assertEqual(grid.y_right[0], 0.3)
        self.assertEqual(grid.n_left % 2, 0)
        self.assertEqual(grid.n_right % 2, 0)
        self.assertEqual(grid.size, grid.n_left + grid.n_right + 2)

    def test_weights_integrate_constants(self) -> None:
        grid = CellGrid.for_interface(0.5, 32)
        self.assertAlmostEqual(float(np.sum(grid.weights)), 1.0, places=13)

    def test_odd_piece_rejected(self) -> None:
        with self.assertRaises(ValueError):
            CellGrid(l=0.5, n_left=3, n_right=4)


class CellFunctionTests(unittest.TestCase):
    def setUp(self) -> None:
        self.grid = CellGrid.for_interface(0.4, 40)

    def test_norm_of_linear_function(self) -> None:
        f = CellFunction.from_callable(self.grid, lambda y: y + 0j)
        self.assertAlmostEqual(f.norm() ** 2, 1.0 / 3.0, places=12)

    def test_inner_is_conjugate_linear_in_second_slot(self) -> None:
        f = CellFunction.from_callable(self.grid, lambda y: np.ones_like(y) + 0j)
        self.assertAlmostEqual(f.inner(1j * f), -1j, places=12)

    def test_spline_reproduces_quadratics(self) -> None:
        f = _square(self.grid)
        points = np.array([0.05, 0.2, 0.39, 0.41, 0.77, 0.99])
        np.testing.assert_allclose(f.evaluate(points), points**2, atol=1e-12)

    def test_finite_difference_traces_exact_for_quadratics(self) -> None:
        f = CellFunction.from_callable(self.grid, lambda y: y**2 + 0j)
        np.testing.assert_allclose(f.derivative_traces(), [0.0, 0.8, 0.8, 2.0], atol=1e-9)

    def test_vertex_and_endpoint_values(self) -> None:
        f = _square(self.grid)
        np.testing.assert_allclose(f.vertex_values(), [0.0, 0.16], atol=1e-15)
        np.testing.assert_allclose(f.endpoint_values(), [0.0, 0.16, 0.16, 1.0], atol=1e-15)

    def test_linear_combination_keeps_traces(self) -> None:
        f = _square(self.grid)
        g = f * 2.0 - f
        np.testing.assert_allclose(g.vector, f.vector)
        np.testing.assert_allclose(g.derivative_traces(), f.derivative_traces())
        self.assertAlmostEqual(CellFunction.zeros(self.grid).norm(), 0.0)

    def test_grids_must_match(self) -> None:
        other = CellFunction.zeros(CellGrid.for_interface(0.4, 80))
        with self.assertRaises(ValueError):
            _square(self.grid) + other

    def test_round_trip_through_vector(self) -> None:
        f = _square(self.grid)
        g = CellFunction.from_vector(self.grid, f.vector)
        np.testing.assert_array_equal(g.left, f.left)
        np.testing.assert_array_equal(g.right, f.right)


if __name__ == "__main__":
    unittest.main()
