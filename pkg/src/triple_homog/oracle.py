from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.linalg import eigh, lu_factor, lu_solve

from .cell import CellFunction
from .errors import SpectralPoleError
from .models import FdFibreMatrix, Medium
from .utils import loglog_slope, sin_over

MIN_CELLS = 16
MAX_CELLS = 4096


def _cell_stiffness(medium: Medium, n: int) -> np.ndarray:
    centres = (np.arange(n) + 0.5) / n
    return np.where(centres < medium.l, medium.a_minus, medium.a_plus)


def _face_stiffness(cells: np.ndarray, averaging: str) -> np.ndarray:
    """Stiffness on the face between cell j and cell j+1 (periodic)."""
    right = np.roll(cells, -1)
    if averaging == "harmonic":
        return 2.0 * cells * right / (cells + right)
    if averaging == "arithmetic":
        return 0.5 * (cells + right)
    raise ValueError(f"unknown face averaging {averaging!r}")


def fd_matrix(
    medium: Medium, chi: float, n: int, averaging: str = "harmonic", dirichlet: bool = False
) -> FdFibreMatrix:
    """Periodic fibre matrix; with dirichlet=True the faces at 0 and l carry zero data instead."""
    if not MIN_CELLS <= n <= MAX_CELLS:
        raise ValueError(f"cell count must lie in [{MIN_CELLS}, {MAX_CELLS}], got {n}")
    interface = medium.l * n
    if abs(interface - round(interface)) > 1e-9:
        raise ValueError(f"interface l={medium.l} is not on a face of the {n}-cell grid")
    h = 1.0 / n
    cells = _cell_stiffness(medium, n)
    faces = _face_stiffness(cells, averaging)
    idx = np.arange(n)
    nxt = (idx + 1) % n
    coupling = -faces * np.exp(1j * chi * h) / h**2
    diagonal = (faces + np.roll(faces, 1)) / h**2

    if dirichlet:
        # face j sits between cells j and j+1; cut the ones at y = l and y = 1
        cut = np.array([int(round(interface)) - 1, n - 1])
        coupling[cut] = 0.0
        diagonal = diagonal.astype(float).copy()
        for j in cut:
            diagonal[j] += (2.0 * cells[j] - faces[j]) / h**2
            k = (j + 1) % n
            diagonal[k] += (2.0 * cells[k] - faces[j]) / h**2

    matrix = np.diag(diagonal).astype(complex)
    matrix[idx, nxt] += coupling
    matrix[nxt, idx] += np.conj(coupling)
    return FdFibreMatrix(medium=medium, chi=chi, n=n, matrix=matrix, averaging=averaging)


def fd_eigen(fdm: FdFibreMatrix, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Lowest eigenpairs; eigenvector columns have unit discrete L2 norm."""
    count = min(count, fdm.n)
    values, vectors = eigh(fdm.matrix, subset_by_index=[0, count - 1])
    return values, vectors / math.sqrt(fdm.h)


def fd_resolvent(fdm: FdFibreMatrix, z: complex, f: np.ndarray) -> np.ndarray:
    shifted = fdm.matrix - complex(z) * np.eye(fdm.n)
    lu, piv = lu_factor(shifted, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= 1e-13 * pivots.max():
        raise SpectralPoleError(f"z={z!r} is an eigenvalue of the {fdm.n}-cell matrix")
    return lu_solve((lu, piv), np.asarray(f, dtype=complex))


def fd_propagator(fdm: FdFibreMatrix, eps: float, t: float, f: np.ndarray) -> np.ndarray:
    """eps A^-1/2 sin(A^1/2 t / eps) f, by the full eigen-decomposition."""
    values, vectors = eigh(fdm.matrix)
    roots = np.sqrt(np.clip(values, 0.0, None))
    weights = sin_over(roots / eps, t)
    return vectors @ (weights * (vectors.conj().T @ np.asarray(f, dtype=complex)))


def sample(u: CellFunction, n: int) -> np.ndarray:
    """Values of a cell function at the n cell centres."""
    return u.evaluate((np.arange(n) + 0.5) / n)


def fd_l2_norm(values: np.ndarray, n: int) -> float:
    return float(np.sqrt(np.sum(np.abs(values) ** 2) / n))


def richardson(coarse, fine, ratio: float = 2.0, order: float = 2.0):
    gain = ratio**order
    return (gain * np.asarray(fine) - np.asarray(coarse)) / (gain - 1.0)


def convergence_order(sizes, errors) -> float:
    """Observed order p in error ~ h^p from errors at cell counts `sizes`."""
    return loglog_slope(1.0 / np.asarray(sizes, dtype=float), errors)


def snapped_sizes(medium: Medium, sizes) -> list[int]:
    """Cell counts near `sizes` that put the interface on a face, keeping ratios between sizes."""
    step = Fraction(medium.l).limit_denominator(MAX_CELLS).denominator
    if abs(step * medium.l - round(step * medium.l)) > 1e-9:
        raise ValueError(f"interface l={medium.l} is not a fraction with denominator <= {MAX_CELLS}")
    out = []
    for n in sizes:
        power = max(0, round(math.log2(n / step)))
        out.append(step * 2**power)
    return [n for n in out if MIN_CELLS <= n <= MAX_CELLS]
