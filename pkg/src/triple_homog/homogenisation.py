from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .cell import CellFunction, CellGrid
from .errors import PoleAtQ1Error
from .medium import checked_coupling, harmonic_mean
from .models import EffectiveFibre, JacobiDilation, Medium
from .triple import dirichlet_resolvent, lambda_eigen, lift, neumann_trace
from .utils import cumulative_integral


def _stiffness_split(medium: Medium) -> tuple[float, float]:
    return medium.a_minus / medium.l, medium.a_plus / (1.0 - medium.l)


def _coupling_terms(medium: Medium, chi: float) -> tuple[float, float, float]:
    """(D - |xi|, |xi|, N) evaluated without cancellation at small chi."""
    checked_coupling(medium, chi)
    p, q = _stiffness_split(medium)
    d = p + q
    s2 = math.sin(chi / 2.0) ** 2
    modulus = math.sqrt(max(d * d - 4.0 * p * q * s2, 0.0))
    gap = 4.0 * p * q * s2 / (d + modulus)
    l = medium.l
    weight = medium.a_minus + medium.a_plus + ((1.0 - l) / l * medium.a_minus + l / (1.0 - l) * medium.a_plus) * math.cos(chi)
    return gap, modulus, weight


def a_hom_closed_form(medium: Medium, chi: float) -> float:
    if chi == 0.0:
        return 0.0
    gap, modulus, weight = _coupling_terms(medium, chi)
    return 6.0 * gap / (2.0 + weight / modulus)


def denominator_closed_form(medium: Medium, chi: float) -> float:
    """<Gamma_1 (A0)^-1 Pi psi, psi>, equal to ||Pi psi||^2."""
    _, modulus, weight = _coupling_terms(medium, chi)
    return (2.0 + weight / modulus) / 6.0


def parallel_lift(medium: Medium, chi: float, grid: CellGrid) -> CellFunction:
    return lift(medium, chi, lambda_eigen(medium, chi).psi_parallel, grid)


def a_hom_quotient(medium: Medium, chi: float, cells: int = 2048) -> tuple[float, float]:
    """Numerator and denominator of the boundary-triple quotient for A^hom, by quadrature."""
    psi = lambda_eigen(medium, chi).psi_parallel
    lifted = parallel_lift(medium, chi, medium.grid(cells))
    numerator = np.vdot(psi, neumann_trace(medium, chi, lifted))
    solved = dirichlet_resolvent(medium, chi, 0.0, lifted)
    denominator = np.vdot(psi, neumann_trace(medium, chi, solved))
    return float(numerator.real), float(denominator.real)


def a_hom_via_triple(medium: Medium, chi: float, cells: int = 2048) -> float:
    numerator, denominator = a_hom_quotient(medium, chi, cells)
    return -numerator / denominator


def _richardson_in_square(values: list[float]) -> float:
    """Extrapolate a sequence at steps h, h/2, h/4, ... whose error is a series in h^2."""
    table = list(values)
    factor = 4.0
    while len(table) > 1:
        table = [(factor * fine - coarse) / (factor - 1.0) for coarse, fine in zip(table, table[1:])]
        factor *= 4.0
    return table[0]


def a_hom_quadratic_coeff(medium: Medium, step: float = 0.1, levels: int = 4) -> float:
    steps = [step / 2**j for j in range(levels)]
    return _richardson_in_square([a_hom_closed_form(medium, h) / h**2 for h in steps])


def a_hom_quartic_coeff(medium: Medium, step: float = 1e-2) -> float:
    """chi^4 Taylor coefficient of the closed form, by differences of A^hom / chi^2 with one Richardson step."""

    def ratio(h: float) -> float:
        return a_hom_closed_form(medium, h) / h**2

    def difference(h: float) -> float:
        return (ratio(h) - ratio(h / 2.0)) / (0.75 * h**2)

    return (4.0 * difference(step / 2.0) - difference(step)) / 3.0


def quartic_coeff_exact(medium: Medium) -> float:
    p, q = _stiffness_split(medium)
    d = p + q
    blend = (1.0 - medium.l) * p + medium.l * q
    return harmonic_mean(medium) * (2.0 * p * q / d**2 / 24.0 - 1.0 / 12.0 + blend / (6.0 * d))


def printed_quartic_coeff(medium: Medium, corrected: bool = True) -> float:
    """Algebraic chi^4 coefficient; the last numerator term is a_+^2 l^2 when corrected and a_+ l^2 otherwise."""
    a1, a2, l = medium.a_minus, medium.a_plus, medium.l
    last = (a2**2 if corrected else a2) * l**2
    numerator = a1 * a2 * (1.0 - l) * l + (1.0 - 2.0 * l) * (a1**2 * (1.0 - l) ** 2 - last)
    return harmonic_mean(medium) * numerator / (12.0 * (a1 * (1.0 - l) + a2 * l) ** 2)


def lifted_parallel_profile(medium: Medium, chi: float, y) -> np.ndarray:
    """Closed-form Pi psi_parallel at points y; the value at y = l is taken from the left."""
    y = np.asarray(y, dtype=float)
    l = medium.l
    xi = checked_coupling(medium, chi)
    inner = np.exp(1j * chi * l) * xi / abs(xi)
    left = 1.0 + (inner - 1.0) * y / l
    right = inner + (np.exp(1j * chi) - inner) * (y - l) / (1.0 - l)
    return np.exp(-1j * chi * y) * np.where(y <= l, left, right) / math.sqrt(2.0)


def dirichlet_parallel_profile(medium: Medium, chi: float, grid: CellGrid) -> CellFunction:
    """(A0)^-1 Pi psi_parallel from the explicit primitive h and the linear correctors."""
    f = parallel_lift(medium, chi, grid)
    l = medium.l
    a_minus, a_plus = medium.a_minus, medium.a_plus

    source_left = -np.exp(1j * chi * grid.y_left) * f.left
    source_right = -np.exp(1j * chi * grid.y_right) * f.right
    flux_left = cumulative_integral(source_left, grid.y_left)
    flux_right = flux_left[-1] + cumulative_integral(source_right, grid.y_right)
    alpha_left = grid.y_left / a_minus
    alpha_right = l / a_minus + (grid.y_right - l) / a_plus
    moment_left = cumulative_integral(alpha_left * source_left, grid.y_left)
    moment_right = moment_left[-1] + cumulative_integral(alpha_right * source_right, grid.y_right)
    h_left = alpha_left * flux_left - moment_left
    h_right = alpha_right * flux_right - moment_right
    h_l, h_1 = h_left[-1], h_right[-1]

    g2_left, g2_right = grid.y_left / l, (1.0 - grid.y_right) / (1.0 - l)
    g3_right = (grid.y_right - l) / (1.0 - l)
    w_left = h_left - h_l * g2_left
    w_right = h_right - h_l * g2_right - h_1 * g3_right
    dw_left = flux_left / a_minus - h_l / l
    dw_right = flux_right / a_plus + h_l / (1.0 - l) - h_1 / (1.0 - l)

    gauge_left = np.exp(-1j * chi * grid.y_left)
    gauge_right = np.exp(-1j * chi * grid.y_right)
    du_left = gauge_left * (dw_left - 1j * chi * w_left)
    du_right = gauge_right * (dw_right - 1j * chi * w_right)
    traces = np.array([du_left[0], du_left[-1], du_right[0], du_right[-1]])
    return CellFunction(grid, gauge_left * w_left, gauge_right * w_right, traces)


def a_hat0(medium: Medium, chi: float, cells: int = 2048, method: str = "profile") -> float:
    grid = medium.grid(cells)
    f = parallel_lift(medium, chi, grid)
    if method == "profile":
        solved = dirichlet_parallel_profile(medium, chi, grid)
    elif method == "resolvent":
        solved = dirichlet_resolvent(medium, chi, 0.0, f)
    else:
        raise ValueError(f"unknown route {method!r} for the bulk scalar")
    return f.inner(f).real / solved.inner(f).real


def jacobi_dilation(a_hom: float, a_hat0: float, eps: float) -> JacobiDilation:
    if eps <= 0 or a_hat0 <= 0:
        raise ValueError("need eps > 0 and a positive bulk scalar")
    q1 = 0.25 * a_hat0 / eps**2
    return JacobiDilation(c=0.5, q0=q1 + a_hom / eps**2, q1=q1, b1=q1)


def continued_fraction_residual(a_hom: float, a_hat0: float, eps: float, z: complex, tol_pole: float = 1e-8) -> complex:
    dilation = jacobi_dilation(a_hom, a_hat0, eps)
    denominator = dilation.c * z - dilation.q1
    if abs(denominator) <= tol_pole * dilation.q1:
        raise PoleAtQ1Error(f"c z equals q1 at z={z!r}")
    fraction = dilation.c * z - dilation.q0 - dilation.b1**2 / denominator
    target = -a_hom / eps**2 + z + z**2 * eps**2 / a_hat0
    return complex(fraction - target)


def second_order_matrix(a_hom: float, a_hat0: float) -> np.ndarray:
    quarter = 0.25 * a_hat0
    return np.array([[a_hom + quarter, quarter], [quarter, quarter]])


def second_order_eigenpairs(a_hom: float, a_hat0: float) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Unscaled (z_minus, z_plus, v_minus, v_plus); the eigenvalues of the matrix are z_minus/2, z_plus/2."""
    quarter = 0.25 * a_hat0
    upper = 0.5 * (a_hom + 2.0 * quarter + math.hypot(a_hom, 2.0 * quarter))
    lower = a_hom * quarter / upper

    def vector(mu: float) -> np.ndarray:
        v = np.array([quarter, mu - a_hom - quarter])
        return v / np.linalg.norm(v)

    return 2.0 * lower, 2.0 * upper, vector(lower), vector(upper)


@lru_cache(maxsize=1024)
def effective_fibre(medium: Medium, chi: float, cells: int = 2048) -> EffectiveFibre:
    a_hom = a_hom_closed_form(medium, chi)
    bulk = a_hat0(medium, chi, cells)
    z_minus, z_plus, v_minus, v_plus = second_order_eigenpairs(a_hom, bulk)
    return EffectiveFibre(
        chi=chi,
        a_hom=a_hom,
        a_hat0=bulk,
        second_order=second_order_matrix(a_hom, bulk),
        z_minus=z_minus,
        z_plus=z_plus,
        v_minus=v_minus,
        v_plus=v_plus,
    )


def theta_projection(medium: Medium, chi: float, f: CellFunction) -> CellFunction:
    g = parallel_lift(medium, chi, f.grid)
    return (f.inner(g) / g.inner(g)) * g
