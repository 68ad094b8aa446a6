"""Dual-route consistency checks run by the ``selftest`` subcommand."""

from __future__ import annotations

import logging
import math
import time
from typing import Any, Callable

import numpy as np

from .cell import CellFunction
from .config import Settings
from .dispersion import band_eigenvalues, lowest_eigenvalue
from .homogenisation import (
    a_hat0,
    a_hom_closed_form,
    a_hom_quotient,
    continued_fraction_residual,
    effective_fibre,
    jacobi_dilation,
    parallel_lift,
)
from .medium import dirichlet_eigenvalues, is_excluded
from .models import Medium
from .oracle import convergence_order, fd_eigen, fd_matrix, fd_propagator, fd_resolvent, richardson, sample, snapped_sizes
from .resolvent import krein_resolvent, spectral_resolvent
from .triple import (
    BASIS,
    adjoint_via_trace,
    apply_expression,
    dirichlet_resolvent,
    green_identity_defect,
    lift,
    m_matrix,
    m_series_truncation,
    solution_operator,
    solution_operator_adjoint,
)
from .utils import loglog_slope

logger = logging.getLogger(__name__)

Check = Callable[[Settings], dict[str, Any]]


def _result(value: float, tolerance: float, passed: bool | None = None, **detail: Any) -> dict[str, Any]:
    if passed is None:
        passed = bool(value <= tolerance)
    return {"value": float(value), "tolerance": float(tolerance), "passed": bool(passed), **detail}


def _relative(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def _chi_grid(medium: Medium, points: int, delta: float) -> list[float]:
    chis = np.linspace(0.05, math.pi - 0.05, points)
    return [float(c) for c in chis if not is_excluded(medium, c, delta)]


def smooth_datum(grid, chi: float) -> CellFunction:
    return CellFunction.from_callable(grid, lambda y: np.exp(-1j * chi * y) * (1.0 + np.cos(2.0 * np.pi * y) + 0.5j * y))


def check_a_hom_routes(settings: Settings) -> dict[str, Any]:
    worst = 0.0
    for medium in settings.media:
        for chi in _chi_grid(medium, settings.chi_points, settings.tol_exclude):
            worst = max(worst, _relative(-np.divide(*a_hom_quotient(medium, chi, settings.grid_cells)), a_hom_closed_form(medium, chi)))
    return _result(worst, 1e-8)


def check_a_hat0_routes(settings: Settings) -> dict[str, Any]:
    """Bulk scalar from the closed-form Dirichlet profile against the Green-function resolvent."""
    worst = 0.0
    for medium in settings.media:
        for chi in [1e-3] + _chi_grid(medium, 5, settings.tol_exclude):
            profile = a_hat0(medium, chi, settings.grid_cells, method="profile")
            resolvent = a_hat0(medium, chi, settings.grid_cells, method="resolvent")
            worst = max(worst, abs(profile - resolvent) / abs(resolvent))
    return _result(worst, 1e-8)


def check_pi_adjoint(settings: Settings) -> dict[str, Any]:
    worst = 0.0
    for medium in settings.media:
        for chi in _chi_grid(medium, 9, settings.tol_exclude):
            _, denominator = a_hom_quotient(medium, chi, settings.grid_cells)
            norm2 = parallel_lift(medium, chi, medium.grid(settings.grid_cells)).norm() ** 2
            worst = max(worst, abs(denominator - norm2) / norm2)
    return _result(worst, 1e-8)


def check_green_identity(settings: Settings) -> dict[str, Any]:
    medium = settings.medium
    grid = medium.grid(settings.grid_cells)
    chi = 0.7
    f = smooth_datum(grid, chi)
    u = lift(medium, chi, np.array([1.0, 0.5j]), grid)
    v = dirichlet_resolvent(medium, chi, 0.0, f)
    defect = green_identity_defect(medium, chi, u, CellFunction.zeros(grid), v, f)
    return _result(abs(defect) / f.norm() ** 2, 1e-8)


def check_adjoint_routes(settings: Settings) -> dict[str, Any]:
    medium = settings.medium
    grid = medium.grid(settings.grid_cells)
    worst = 0.0
    for chi in (0.3, 1.1, 2.5):
        f = smooth_datum(grid, chi)
        for z in (settings.z, complex(-2.0, 0.5)):
            worst = max(worst, _relative(solution_operator_adjoint(medium, chi, z, f), adjoint_via_trace(medium, chi, z, f)))
    return _result(worst, 1e-8)


def check_m_series(settings: Settings) -> dict[str, Any]:
    medium = settings.medium
    grid = medium.grid(settings.grid_cells)
    z = 0.1 * dirichlet_eigenvalues(medium, 1)[0]
    chi = 0.9
    series = m_series_truncation(medium, chi, z, 14, grid).matrix
    closed = m_matrix(medium, chi, z).matrix
    direct = solution_operator(medium, chi, z, BASIS[0], grid)
    neumann = solution_operator(medium, chi, z, BASIS[0], grid, method="neumann")
    return _result(
        max(_relative(series, closed), (direct - neumann).norm() / direct.norm()),
        1e-7,
    )


def check_krein_residual(settings: Settings) -> dict[str, Any]:
    medium = settings.medium
    grid = medium.grid(settings.grid_cells)
    chi, z = 1.3, settings.z
    f = smooth_datum(grid, chi)
    u = krein_resolvent(medium, chi, z, f, settings.tol_pole, settings.tol_singular)
    left, right = apply_expression(medium, chi, u)
    residual = np.concatenate([left - z * u.left[1:-1], right - z * u.right[1:-1]])
    target = np.concatenate([f.left[1:-1], f.right[1:-1]])
    return _result(float(np.linalg.norm(residual - target) / np.linalg.norm(target)), 1e-4)


def check_krein_three_way(settings: Settings) -> dict[str, Any]:
    """Krein formula against the mode sum (up to its tail bound) and extrapolated finite differences."""
    z = settings.z
    spectral_excess = 0.0
    fd_error = 0.0
    orders = []
    for medium in settings.media:
        grid = medium.grid(settings.grid_cells)
        sizes = snapped_sizes(medium, settings.fd_sizes)[1:3]
        for chi in _chi_grid(medium, 9, settings.tol_exclude):
            f = smooth_datum(grid, chi)
            krein = krein_resolvent(medium, chi, z, f, settings.tol_pole, settings.tol_singular)
            band = band_eigenvalues(medium, chi, settings.mode_count, grid)
            spectral, tail = spectral_resolvent(band, z, f)
            spectral_excess = max(spectral_excess, (krein - spectral).norm() - tail)

            # <u, f> by the midpoint rule converges at h^2 on every grid, so it extrapolates
            pairings, errors = [], []
            for n in sizes:
                sampled = sample(f, n)
                fd = fd_resolvent(fd_matrix(medium, chi, n), z, sampled)
                pairings.append(complex(np.vdot(sampled, fd)) / n)
                errors.append(float(np.max(np.abs(fd - sample(krein, n)))))
            extrapolated = richardson(pairings[0], pairings[1])
            fd_error = max(fd_error, _relative(extrapolated, krein.inner(f)))
            if min(errors) > 0:
                orders.append(convergence_order(sizes, errors))
    passed = spectral_excess <= 1e-6 and fd_error <= 1e-6 and bool(orders) and min(orders) >= 1.9
    return _result(
        max(spectral_excess, 0.0),
        1e-6,
        passed=passed,
        fd_extrapolated_error=fd_error,
        fd_orders=[round(o, 4) for o in orders],
    )


def check_continued_fraction(settings: Settings) -> dict[str, Any]:
    medium = settings.medium
    fibre = effective_fibre(medium, 0.5, settings.grid_cells)
    eps = 0.1
    scale = 1e-2 * fibre.a_hat0 / eps**2
    zs = -scale * np.geomspace(1e-2, 1.0, 9)
    residuals = [abs(continued_fraction_residual(fibre.a_hom, fibre.a_hat0, eps, z, settings.tol_pole)) for z in zs]
    slope = loglog_slope(np.abs(zs), residuals)
    ratio = abs(continued_fraction_residual(fibre.a_hom, fibre.a_hat0, eps, -1.0, settings.tol_pole)) / abs(
        continued_fraction_residual(fibre.a_hom, fibre.a_hat0, eps / 2.0, -1.0, settings.tol_pole)
    )
    recurrence = max(abs(r) for r in jacobi_dilation(fibre.a_hom, fibre.a_hat0, eps).recurrence_residuals(fibre.a_hom, fibre.a_hat0, eps))
    passed = abs(slope - 3.0) <= 0.05 and abs(ratio / 16.0 - 1.0) <= 0.02 and recurrence <= 1e-8 * fibre.a_hat0 / eps**2
    return _result(abs(slope - 3.0), 0.05, passed=passed, slope=slope, eps4_ratio=ratio, recurrence=recurrence)


def check_fd_eigenvalue_order(settings: Settings) -> dict[str, Any]:
    medium = settings.medium
    chi = 1.0
    exact = lowest_eigenvalue(medium, chi)
    sizes = snapped_sizes(medium, settings.fd_sizes)
    errors = [abs(fd_eigen(fd_matrix(medium, chi, n), 1)[0][0] - exact) for n in sizes]
    order = convergence_order(sizes, errors)
    return _result(abs(order - 2.0), 0.1, order=order, errors=errors)


def check_fd_constant_spectrum(settings: Settings) -> dict[str, Any]:
    medium = Medium(1.0, 1.0, 0.5)
    chi = 0.6
    sizes = snapped_sizes(medium, settings.fd_sizes)[:2]
    errors = []
    for n in sizes:
        values, _ = fd_eigen(fd_matrix(medium, chi, n), 5)
        shifts = np.sort((2.0 * np.pi * np.arange(-3, 4) + chi) ** 2)[:5]
        errors.append(float(np.max(np.abs(values - shifts) / shifts)))
    order = convergence_order(sizes, errors)
    return _result(abs(order - 2.0), 0.1, order=order, errors=errors)


def check_fd_propagator_order(settings: Settings) -> dict[str, Any]:
    medium = settings.medium
    chi, eps, t = 1.0, 1.0, 1.0
    grid = medium.grid(settings.grid_cells)
    band = band_eigenvalues(medium, chi, 1, grid)
    phi = band.eigenfunctions[0]
    root = math.sqrt(band.eigenvalues[0])
    exact = (eps * math.sin(root * t / eps) / root) * phi
    sizes = snapped_sizes(medium, settings.fd_sizes)[:3]
    errors = []
    for n in sizes:
        fd = fd_propagator(fd_matrix(medium, chi, n), eps, t, sample(phi, n))
        errors.append(float(np.max(np.abs(fd - sample(exact, n)))))
    order = convergence_order(sizes, errors)
    return _result(abs(order - 2.0), 0.1, order=order, errors=errors)


CHECKS: dict[str, Check] = {
    "a_hom_routes": check_a_hom_routes,
    "pi_adjoint_identity": check_pi_adjoint,
    "a_hat0_routes": check_a_hat0_routes,
    "green_identity": check_green_identity,
    "adjoint_routes": check_adjoint_routes,
    "m_series": check_m_series,
    "krein_residual": check_krein_residual,
    "krein_three_way": check_krein_three_way,
    "continued_fraction": check_continued_fraction,
    "fd_eigenvalue_order": check_fd_eigenvalue_order,
    "fd_constant_spectrum": check_fd_constant_spectrum,
    "fd_propagator_order": check_fd_propagator_order,
}


def run_check(name: str, settings: Settings) -> dict[str, Any]:
    started = time.perf_counter()
    outcome = CHECKS[name](settings)
    outcome["seconds"] = round(time.perf_counter() - started, 3)
    logger.info("check %s: %s", name, "ok" if outcome["passed"] else "FAILED")
    return outcome
