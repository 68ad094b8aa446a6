from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import svdvals
from scipy.optimize import minimize_scalar

from .cell import CellFunction, CellGrid
from .dispersion import lowest_eigenvalue
from .errors import NonConvergenceError, SingularMError, SpectralPoleError
from .homogenisation import a_hom_closed_form, effective_fibre, parallel_lift, theta_projection
from .medium import is_excluded
from .models import BlochBand, EffectiveFibre, Medium, SweepRecord
from .triple import (
    BASIS,
    dirichlet_resolvent,
    dirichlet_resolvent_matrix,
    m_matrix,
    solution_operator,
    solution_operator_adjoint,
)
from .utils import loglog_slope

logger = logging.getLogger(__name__)

DENSE_NORM_LIMIT = 4096


def _solve_m(medium: Medium, chi: float, z: complex, tol_pole: float, tol_singular: float) -> np.ndarray:
    m = m_matrix(medium, chi, z, tol_pole)
    scale = max(np.abs(m.matrix).max(), 1.0)
    if abs(m.determinant) < tol_singular * scale**2:
        raise SingularMError(f"M(z) is singular at z={z!r}, chi={chi}")
    return np.linalg.inv(m.matrix)


def krein_resolvent(
    medium: Medium,
    chi: float,
    z: complex,
    f: CellFunction,
    tol_pole: float = 1e-8,
    tol_singular: float = 1e-14,
) -> CellFunction:
    """(A_chi - z)^-1 f = (A0 - z)^-1 f - S(z) M(z)^-1 S(conj z)* f."""
    m_inv = _solve_m(medium, chi, z, tol_pole, tol_singular)
    coefficients = m_inv @ solution_operator_adjoint(medium, chi, z, f, tol_pole)
    out = dirichlet_resolvent(medium, chi, z, f, tol_pole)
    for c, e in zip(coefficients, BASIS):
        out = out - c * solution_operator(medium, chi, z, e, f.grid, tol_pole=tol_pole)
    return out


def first_order_factor(a_hom: float, eps: float, z: complex) -> complex:
    denominator = a_hom / eps**2 - z
    if abs(denominator) < 1e-300:
        raise SpectralPoleError(f"z={z!r} is the eigenvalue of the first-order fibre")
    return 1.0 / denominator


def second_order_factor(fibre: EffectiveFibre, eps: float, z: complex) -> complex:
    """[(eps^-2 A2 - z/2)^-1]_11 from the eigenpairs of the second-order matrix."""
    total = 0.0 + 0.0j
    for stored, v in ((fibre.z_minus, fibre.v_minus), (fibre.z_plus, fibre.v_plus)):
        denominator = 0.5 * stored / eps**2 - 0.5 * z
        if abs(denominator) < 1e-300:
            raise SpectralPoleError(f"z={z!r} is an eigenvalue of the second-order fibre")
        total += v[0] ** 2 / denominator
    return total


def first_order_resolvent(medium: Medium, chi: float, eps: float, z: complex, f: CellFunction) -> CellFunction:
    return first_order_factor(a_hom_closed_form(medium, chi), eps, z) * theta_projection(medium, chi, f)


def second_order_resolvent(
    medium: Medium, chi: float, eps: float, z: complex, f: CellFunction, cells: int = 2048
) -> CellFunction:
    fibre = effective_fibre(medium, chi, cells)
    return second_order_factor(fibre, eps, z) * theta_projection(medium, chi, f)


def spectral_resolvent(band: BlochBand, z: complex, f: CellFunction) -> tuple[CellFunction, float]:
    """Mode sum over the band with a bound on the neglected tail."""
    coefficients = band.coefficients(f)
    out = CellFunction.zeros(f.grid)
    captured = CellFunction.zeros(f.grid)
    for lam, c, phi in zip(band.eigenvalues, coefficients, band.eigenfunctions):
        out = out + (c / (lam - z)) * phi
        captured = captured + c * phi
    tail = (f - captured).norm()
    gap = abs(complex(z) - band.eigenvalues[-1]) if complex(z).real <= band.eigenvalues[-1] else abs(complex(z).imag)
    return out, tail / max(gap, 1e-300)


@dataclass(frozen=True, eq=False)
class CellOperator:
    """Dense realisation of a linear map on grid values, with Simpson weights defining the L2 structure."""

    grid: CellGrid
    matrix: np.ndarray

    def apply(self, f: CellFunction) -> CellFunction:
        return CellFunction.from_vector(self.grid, self.matrix @ f.vector)

    def __sub__(self, other: CellOperator) -> CellOperator:
        if other.grid != self.grid:
            raise ValueError("operators live on different grids")
        return CellOperator(self.grid, self.matrix - other.matrix)

    def __mul__(self, scalar: complex) -> CellOperator:
        return CellOperator(self.grid, scalar * self.matrix)

    __rmul__ = __mul__

    def weighted(self) -> np.ndarray:
        root = np.sqrt(self.grid.weights)
        return root[:, None] * self.matrix / root[None, :]

    def norm(self) -> float:
        return float(svdvals(self.weighted())[0])


def _basis_columns(medium: Medium, chi: float, z: complex, grid: CellGrid, tol_pole: float) -> np.ndarray:
    return np.column_stack([solution_operator(medium, chi, z, e, grid, tol_pole=tol_pole).vector for e in BASIS])


def dirichlet_operator(medium: Medium, chi: float, z: complex, grid: CellGrid, tol_pole: float = 1e-8) -> CellOperator:
    return CellOperator(grid, dirichlet_resolvent_matrix(medium, chi, z, grid, tol_pole))


def krein_operator(
    medium: Medium,
    chi: float,
    z: complex,
    grid: CellGrid,
    tol_pole: float = 1e-8,
    tol_singular: float = 1e-14,
) -> CellOperator:
    m_inv = _solve_m(medium, chi, z, tol_pole, tol_singular)
    forward = _basis_columns(medium, chi, z, grid, tol_pole)
    backward = _basis_columns(medium, chi, np.conj(complex(z)), grid, tol_pole)
    adjoint = (np.conj(backward) * grid.weights[:, None]).T
    correction = forward @ m_inv @ adjoint
    return CellOperator(grid, dirichlet_resolvent_matrix(medium, chi, z, grid, tol_pole) - correction)


def exact_scaled_operator(
    medium: Medium, chi: float, eps: float, z: complex, grid: CellGrid, tol_pole: float = 1e-8
) -> CellOperator:
    """(eps^-2 A_chi - z)^-1 = eps^2 (A_chi - eps^2 z)^-1."""
    return eps**2 * krein_operator(medium, chi, eps**2 * complex(z), grid, tol_pole)


def theta_operator(medium: Medium, chi: float, grid: CellGrid) -> CellOperator:
    g = parallel_lift(medium, chi, grid).vector
    return CellOperator(grid, np.outer(g, grid.weights * np.conj(g)) / np.sum(grid.weights * np.abs(g) ** 2))


def first_order_operator(medium: Medium, chi: float, eps: float, z: complex, grid: CellGrid) -> CellOperator:
    return first_order_factor(a_hom_closed_form(medium, chi), eps, z) * theta_operator(medium, chi, grid)


def second_order_operator(
    medium: Medium, chi: float, eps: float, z: complex, grid: CellGrid, cells: int = 2048
) -> CellOperator:
    fibre = effective_fibre(medium, chi, cells)
    return second_order_factor(fibre, eps, z) * theta_operator(medium, chi, grid)


def power_iteration_norm(
    op: CellOperator, starts: int = 5, tol: float = 1e-10, max_iter: int = 500, seed: int = 0
) -> float:
    """Largest singular value of the weighted matrix by power iteration on K^H K from random starts."""
    k = op.weighted()
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(starts):
        x = rng.standard_normal(k.shape[1]) + 1j * rng.standard_normal(k.shape[1])
        x /= np.linalg.norm(x)
        ratio_old = math.inf
        for iteration in range(max_iter):
            kx = k @ x
            ratio = float(np.linalg.norm(kx))
            if ratio == 0.0:
                break
            if abs(ratio - ratio_old) <= tol * ratio:
                logger.debug("power iteration converged after %d iterations", iteration + 1)
                break
            ratio_old = ratio
            x = k.conj().T @ kx
            x /= np.linalg.norm(x)
        else:
            raise NonConvergenceError(f"power iteration did not settle in {max_iter} iterations")
        best = max(best, ratio)
    return best


def operator_norm_diff(
    op_a: CellOperator,
    op_b: CellOperator,
    cross_check: bool = False,
    tol: float = 1e-6,
    dense_limit: int = DENSE_NORM_LIMIT,
) -> float:
    """Discrete L2 norm of op_a - op_b; dense SVD up to ``dense_limit`` grid points, power iteration above."""
    diff = op_a - op_b
    if diff.matrix.shape[0] > dense_limit:
        try:
            return power_iteration_norm(diff)
        except NonConvergenceError as exc:
            logger.warning("%s; falling back to dense SVD", exc)
            return diff.norm()
    value = diff.norm()
    if cross_check:
        try:
            estimate = power_iteration_norm(diff)
        except NonConvergenceError as exc:
            logger.warning("%s; keeping the dense SVD value", exc)
        else:
            if abs(estimate - value) > tol * max(value, 1e-300):
                logger.warning("power iteration norm %.6e disagrees with SVD norm %.6e", estimate, value)
    return value


def spectral_distance_experiment(medium: Medium, chi_grid) -> tuple[list[SweepRecord], float]:
    records = []
    for chi in chi_grid:
        distance = abs(lowest_eigenvalue(medium, chi) - a_hom_closed_form(medium, chi))
        records.append(SweepRecord(chi=float(chi), extra={"distance": distance}))
    slope = loglog_slope([r.chi for r in records], [r.extra["distance"] for r in records])
    return records, slope


def chi_samples(medium: Medium, eps: float, outer_points: int, threshold_power: float, delta: float):
    """Positive quasimomenta around the small-chi threshold, around chi ~ eps and on a uniform outer grid."""
    threshold = eps**threshold_power
    inner = threshold * np.array([1 / 8, 1 / 4, 1 / 2, 1.0])
    near = eps * np.array([1 / 4, 1 / 2, 1.0, 2.0, 4.0])
    outer = np.linspace(0.0, math.pi, outer_points)[1:]
    chis = np.unique(np.concatenate([inner, near, outer]))
    return [float(c) for c in chis if 0.0 < c <= math.pi and not is_excluded(medium, c, delta)]


def _worst_over_chi(norm_at, chis: list[float]) -> tuple[float, float]:
    values = [norm_at(c) for c in chis]
    best = int(np.argmax(values))
    chi_best, value_best = chis[best], values[best]
    lo = chis[best - 1] if best > 0 else 0.5 * chis[best]
    hi = chis[best + 1] if best + 1 < len(chis) else chis[best]
    if hi > lo:
        refined = minimize_scalar(lambda c: -norm_at(c), bounds=(lo, hi), method="bounded", options={"xatol": 1e-3 * lo})
        if -refined.fun > value_best:
            chi_best, value_best = float(refined.x), float(-refined.fun)
    return chi_best, value_best


def admissible_z(
    rule: str,
    kind: str,
    eps: float,
    alpha: float,
    z: complex = -1.0,
    scale: float = 1.0,
    points: int = 4,
) -> list[complex]:
    """Spectral parameters for one eps.

    ``fixed`` keeps z. ``scaled`` puts z on the negative axis at the edge of the admissible
    disc, |z| = scale * eps^((alpha - 2) / 2) for the first-order estimate and
    scale * eps^((alpha - 4) / 3) for the second-order one. ``sweep`` spaces ``points``
    values geometrically along the negative axis up to that edge.
    """
    if rule == "fixed":
        return [complex(z)]
    if kind == "first":
        power = (alpha - 2.0) / 2.0
    elif kind == "second":
        power = (alpha - 4.0) / 3.0
    else:
        raise ValueError(f"unknown approximant {kind!r}")
    top = scale * eps**power
    if rule == "scaled":
        return [complex(-top)]
    if rule == "sweep":
        magnitudes = np.unique(np.geomspace(min(1.0, top), top, max(points, 1)))
        return [complex(-m) for m in magnitudes]
    raise ValueError(f"unknown z rule {rule!r}")


def _approximant_operator(
    medium: Medium, chi: float, eps: float, z: complex, grid: CellGrid, kind: str, cells: int
) -> CellOperator:
    if kind == "first":
        return first_order_operator(medium, chi, eps, z, grid)
    if kind == "second":
        return second_order_operator(medium, chi, eps, z, grid, cells)
    raise ValueError(f"unknown approximant {kind!r}")


def resolvent_error_at(
    medium: Medium,
    chi: float,
    eps: float,
    z: complex,
    grid: CellGrid,
    kind: str,
    cells: int = 2048,
    tol_pole: float = 1e-8,
) -> float:
    exact = exact_scaled_operator(medium, chi, eps, z, grid, tol_pole)
    return operator_norm_diff(exact, _approximant_operator(medium, chi, eps, z, grid, kind, cells))


def resolvent_errors_at(
    medium: Medium,
    chi: float,
    eps: float,
    z: complex,
    grid: CellGrid,
    cells: int = 2048,
    tol_pole: float = 1e-8,
    cross_check: bool = False,
) -> tuple[float, float]:
    exact = exact_scaled_operator(medium, chi, eps, z, grid, tol_pole)
    first = operator_norm_diff(exact, first_order_operator(medium, chi, eps, z, grid), cross_check=cross_check)
    second = operator_norm_diff(exact, second_order_operator(medium, chi, eps, z, grid, cells), cross_check=cross_check)
    return first, second


def resolvent_error_cell(
    medium: Medium,
    eps: float,
    alpha: float,
    zs: list[complex],
    kind: str,
    norm_cells: int,
    cells: int,
    outer_points: int,
    delta: float,
    cross_check: bool = False,
) -> SweepRecord:
    """Worst fibre error over chi and the given z values at one eps, for the first- or second-order approximant."""
    grid = medium.grid(norm_cells)
    power = (alpha + 2.0) / (4.0 if kind == "first" else 6.0)
    chis = chi_samples(medium, eps, outer_points, power, delta)

    chi_worst, z_worst, worst = chis[0], complex(zs[0]), -math.inf
    for z in zs:
        chi_z, value = _worst_over_chi(lambda chi: resolvent_error_at(medium, chi, eps, z, grid, kind, cells), chis)
        logger.debug("eps=%.4g z=%.4g %s-order error %.3e at chi=%.4g", eps, complex(z).real, kind, value, chi_z)
        if value > worst:
            chi_worst, z_worst, worst = chi_z, complex(z), value

    first, second = resolvent_errors_at(medium, chi_worst, eps, z_worst, grid, cells, cross_check=cross_check)
    logger.info("eps=%.4g %s-order worst error %.3e at chi=%.4g z=%.4g", eps, kind, worst, chi_worst, z_worst.real)
    return SweepRecord(eps=eps, alpha=alpha, chi=chi_worst, z=z_worst, err_first=first, err_second=second)


def fit_rate(records: list[SweepRecord], column: str) -> tuple[float, float]:
    """Log-log slope and constant of an error column against eps."""
    eps = np.array([r.eps for r in records])
    err = np.array([getattr(r, column) for r in records])
    slope = loglog_slope(eps, err)
    constant = float(np.exp(np.mean(np.log(err) - slope * np.log(eps))))
    return slope, constant


def _error_sweep(
    kind: str,
    medium: Medium,
    alpha: float,
    eps_grid,
    z_rule: str,
    z: complex,
    z_scale: float,
    z_points: int,
    norm_cells: int,
    cells: int,
    outer_points: int,
    delta: float,
    cross_check: bool,
) -> list[SweepRecord]:
    records = []
    for eps in eps_grid:
        zs = admissible_z(z_rule, kind, eps, alpha, z, z_scale, z_points)
        records.append(resolvent_error_cell(medium, eps, alpha, zs, kind, norm_cells, cells, outer_points, delta, cross_check))
    return records


def resolvent_error_experiment(
    medium: Medium,
    alpha: float,
    eps_grid,
    z_rule: str = "fixed",
    z: complex = -1.0,
    z_scale: float = 1.0,
    z_points: int = 4,
    norm_cells: int = 256,
    cells: int = 2048,
    outer_points: int = 24,
    delta: float = 1e-6,
    cross_check: bool = False,
) -> tuple[list[SweepRecord], float]:
    if not 0.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (0, 2) for the first-order estimate")
    records = _error_sweep(
        "first", medium, alpha, eps_grid, z_rule, z, z_scale, z_points, norm_cells, cells, outer_points, delta, cross_check
    )
    return records, fit_rate(records, "err_first")[0]


def second_order_error_experiment(
    medium: Medium,
    alpha: float,
    eps_grid,
    z_rule: str = "fixed",
    z: complex = -1.0,
    z_scale: float = 1.0,
    z_points: int = 4,
    norm_cells: int = 256,
    cells: int = 2048,
    outer_points: int = 24,
    delta: float = 1e-6,
    cross_check: bool = False,
) -> tuple[list[SweepRecord], float]:
    if not 0.0 < alpha < 4.0:
        raise ValueError("alpha must lie in (0, 4) for the second-order estimate")
    records = _error_sweep(
        "second", medium, alpha, eps_grid, z_rule, z, z_scale, z_points, norm_cells, cells, outer_points, delta, cross_check
    )
    return records, fit_rate(records, "err_second")[0]


def second_order_exponent(alpha: float) -> float:
    return min((alpha + 2.0) / 3.0, (4.0 - alpha) / 3.0)
