from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline


def _even_cells(length: float, cells: int) -> int:
    return max(4, 2 * int(round(length * cells / 2)))


def _one_sided_slope(values: np.ndarray, h: float) -> complex:
    f0, f1, f2, f3, f4 = values[:5]
    return (-25 * f0 + 48 * f1 - 36 * f2 + 16 * f3 - 3 * f4) / (12 * h)


@dataclass(frozen=True)
class CellGrid:
    """Piecewise-uniform grid on [0, 1] with the interface l as the shared end node of both pieces."""

    l: float
    n_left: int
    n_right: int

    def __post_init__(self) -> None:
        if not 0.0 < self.l < 1.0:
            raise ValueError(f"interface must lie in (0, 1), got {self.l}")
        for n in (self.n_left, self.n_right):
            if n < 4 or n % 2:
                raise ValueError(f"piece cell counts must be even and >= 4, got {n}")

    @classmethod
    def for_interface(cls, l: float, cells: int) -> CellGrid:
        return cls(l=float(l), n_left=_even_cells(l, cells), n_right=_even_cells(1.0 - l, cells))

    @cached_property
    def y_left(self) -> np.ndarray:
        return np.linspace(0.0, self.l, self.n_left + 1)

    @cached_property
    def y_right(self) -> np.ndarray:
        return np.linspace(self.l, 1.0, self.n_right + 1)

    @property
    def h_left(self) -> float:
        return self.l / self.n_left

    @property
    def h_right(self) -> float:
        return (1.0 - self.l) / self.n_right

    @property
    def size(self) -> int:
        return self.n_left + self.n_right + 2

    @cached_property
    def points(self) -> np.ndarray:
        return np.concatenate([self.y_left, self.y_right])

    @cached_property
    def weights(self) -> np.ndarray:
        left = simpson(np.eye(self.n_left + 1), x=self.y_left, axis=0)
        right = simpson(np.eye(self.n_right + 1), x=self.y_right, axis=0)
        return np.concatenate([left, right])


@dataclass(frozen=True, eq=False)
class CellFunction:
    """Complex function on the unit cell, stored piecewise, with traces u'(0), u'(l-), u'(l+), u'(1)."""

    grid: CellGrid
    left: np.ndarray
    right: np.ndarray
    traces: np.ndarray | None = None

    def __post_init__(self) -> None:
        left = np.array(self.left, dtype=complex)
        right = np.array(self.right, dtype=complex)
        if left.shape != (self.grid.n_left + 1,) or right.shape != (self.grid.n_right + 1,):
            raise ValueError("values do not match the grid")
        left.setflags(write=False)
        right.setflags(write=False)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        if self.traces is not None:
            traces = np.array(self.traces, dtype=complex).reshape(4)
            traces.setflags(write=False)
            object.__setattr__(self, "traces", traces)

    @classmethod
    def zeros(cls, grid: CellGrid) -> CellFunction:
        return cls(grid, np.zeros(grid.n_left + 1), np.zeros(grid.n_right + 1), np.zeros(4))

    @classmethod
    def from_vector(cls, grid: CellGrid, vector: np.ndarray, traces: np.ndarray | None = None) -> CellFunction:
        vector = np.asarray(vector)
        split = grid.n_left + 1
        return cls(grid, vector[:split], vector[split:], traces)

    @classmethod
    def from_callable(
        cls,
        grid: CellGrid,
        func: Callable[[np.ndarray], np.ndarray],
        derivative: Callable[[np.ndarray], np.ndarray] | None = None,
    ) -> CellFunction:
        traces = None
        if derivative is not None:
            l = grid.l
            traces = np.array(
                [
                    derivative(np.array([0.0]))[0],
                    derivative(np.array([np.nextafter(l, 0.0)]))[0],
                    derivative(np.array([np.nextafter(l, 1.0)]))[0],
                    derivative(np.array([1.0]))[0],
                ]
            )
        left = func(grid.y_left)
        right = func(grid.y_right)
        # the shared node takes one-sided limits from each piece
        left = np.array(left, dtype=complex)
        right = np.array(right, dtype=complex)
        left[-1] = func(np.array([np.nextafter(grid.l, 0.0)]))[0]
        right[0] = func(np.array([np.nextafter(grid.l, 1.0)]))[0]
        return cls(grid, left, right, traces)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.left, self.right])

    def vertex_values(self) -> np.ndarray:
        """Gamma_0 data (u_-(0), u_+(l))."""
        return np.array([self.left[0], self.right[0]])

    def endpoint_values(self) -> np.ndarray:
        return np.array([self.left[0], self.left[-1], self.right[0], self.right[-1]])

    def derivative_traces(self) -> np.ndarray:
        if self.traces is not None:
            return self.traces
        g = self.grid
        return np.array(
            [
                _one_sided_slope(self.left, g.h_left),
                -_one_sided_slope(self.left[::-1], g.h_left),
                _one_sided_slope(self.right, g.h_right),
                -_one_sided_slope(self.right[::-1], g.h_right),
            ]
        )

    def inner(self, other: CellFunction) -> complex:
        self._check_grid(other)
        return complex(np.sum(self.grid.weights * self.vector * np.conj(other.vector)))

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self).real, 0.0)))

    def evaluate(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        out = np.empty(points.shape, dtype=complex)
        on_left = points < self.grid.l
        traces = self.derivative_traces()
        pieces = (
            (on_left, self.grid.y_left, self.left, traces[0], traces[1]),
            (~on_left, self.grid.y_right, self.right, traces[2], traces[3]),
        )
        for mask, nodes, values, d0, d1 in pieces:
            if not mask.any():
                continue
            re = CubicSpline(nodes, values.real, bc_type=((1, d0.real), (1, d1.real)))
            im = CubicSpline(nodes, values.imag, bc_type=((1, d0.imag), (1, d1.imag)))
            out[mask] = re(points[mask]) + 1j * im(points[mask])
        return out

    def _check_grid(self, other: CellFunction) -> None:
        if other.grid != self.grid:
            raise ValueError("cell functions live on different grids")

    def _combine(self, other: CellFunction, sign: float) -> CellFunction:
        self._check_grid(other)
        traces = None
        if self.traces is not None and other.traces is not None:
            traces = self.traces + sign * other.traces
        return CellFunction(self.grid, self.left + sign * other.left, self.right + sign * other.right, traces)

    def __add__(self, other: CellFunction) -> CellFunction:
        return self._combine(other, 1.0)

    def __sub__(self, other: CellFunction) -> CellFunction:
        return self._combine(other, -1.0)

    def __mul__(self, scalar: complex) -> CellFunction:
        traces = None if self.traces is None else scalar * self.traces
        return CellFunction(self.grid, scalar * self.left, scalar * self.right, traces)

    __rmul__ = __mul__

    def __neg__(self) -> CellFunction:
        return self * -1.0

    def __truediv__(self, scalar: complex) -> CellFunction:
        return self * (1.0 / scalar)
