from __future__ import annotations

import numpy as np
from scipy.linalg import block_diag

from .cell import CellFunction, CellGrid
from .errors import NonConvergenceError, SeriesDivergenceError, SpectralPoleError
from .medium import checked_coupling, coupling_xi, dirichlet_eigenvalues, pole_distance, vertex_sum_d
from .models import LambdaEigen, Medium, MMatrix
from .utils import cumulative_integral, sin_over

BASIS = (np.array([1.0, 0.0], dtype=complex), np.array([0.0, 1.0], dtype=complex))


def lambda_matrix(medium: Medium, chi: float) -> np.ndarray:
    d = vertex_sum_d(medium)
    xi = coupling_xi(medium, chi)
    return np.array([[-d, np.conj(xi)], [xi, -d]], dtype=complex)


def lambda_eigen(medium: Medium, chi: float) -> LambdaEigen:
    d = vertex_sum_d(medium)
    xi = checked_coupling(medium, chi)
    phase = xi / abs(xi)
    root2 = np.sqrt(2.0)
    return LambdaEigen(
        mu_parallel=-d + abs(xi),
        mu_perp=-d - abs(xi),
        psi_parallel=np.array([1.0, phase]) / root2,
        psi_perp=np.array([1.0, -phase]) / root2,
    )


def check_pole(medium: Medium, z: complex, tol_pole: float = 1e-8) -> None:
    if pole_distance(medium, z) < tol_pole:
        raise SpectralPoleError(f"z={z!r} is within {tol_pole:g} of a Dirichlet eigenvalue of {medium.label}")


def _column(values: np.ndarray, like: np.ndarray) -> np.ndarray:
    return values.reshape(values.shape + (1,) * (like.ndim - 1))


def _piece_resolvent(g: np.ndarray, s: np.ndarray, a: float, z: complex):
    """Green's function solve of -a w'' - z w = g, w(0) = w(L) = 0 on local nodes s.

    Returns w and the end slopes w'(0), w'(L). Works column-wise when g is 2D.
    """
    length = s[-1]
    kappa = np.sqrt(complex(z) / a)
    near = _column(sin_over(kappa, s), g)
    far = _column(sin_over(kappa, length - s), g)
    i1 = cumulative_integral(near * g, s)
    j = cumulative_integral(far * g, s)
    denom = a * sin_over(kappa, length)
    w = (far * i1 + near * (j[-1] - j)) / denom
    return w, j[-1] / denom, -i1[-1] / denom


def _gauge(chi: float, y: np.ndarray, like: np.ndarray) -> np.ndarray:
    return _column(np.exp(-1j * chi * y), like)


def dirichlet_resolvent(
    medium: Medium, chi: float, z: complex, f: CellFunction, tol_pole: float = 1e-8
) -> CellFunction:
    """(A0 - z)^-1 f: Dirichlet conditions at 0, l and 1, each interval solved in the gauge u = exp(-i chi y) w."""
    check_pole(medium, z, tol_pole)
    g = f.grid
    l = medium.l
    w_left, dl0, dll = _piece_resolvent(np.exp(1j * chi * g.y_left) * f.left, g.y_left, medium.a_minus, z)
    w_right, dr0, dr1 = _piece_resolvent(np.exp(1j * chi * g.y_right) * f.right, g.y_right - l, medium.a_plus, z)
    traces = np.array([dl0, np.exp(-1j * chi * l) * dll, np.exp(-1j * chi * l) * dr0, np.exp(-1j * chi) * dr1])
    return CellFunction(
        g,
        np.exp(-1j * chi * g.y_left) * w_left,
        np.exp(-1j * chi * g.y_right) * w_right,
        traces,
    )


def dirichlet_resolvent_matrix(
    medium: Medium, chi: float, z: complex, grid: CellGrid, tol_pole: float = 1e-8
) -> np.ndarray:
    """Matrix of the map f -> (A0 - z)^-1 f acting on stacked grid values."""
    check_pole(medium, z, tol_pole)
    blocks = []
    for y, origin, a in ((grid.y_left, 0.0, medium.a_minus), (grid.y_right, medium.l, medium.a_plus)):
        g = np.diag(np.exp(1j * chi * y))
        w, _, _ = _piece_resolvent(g, y - origin, a, z)
        blocks.append(_gauge(chi, y, w) * w)
    return block_diag(*blocks)


def _boundary_solution(medium: Medium, chi: float, z: complex, phi, grid: CellGrid) -> CellFunction:
    phi1, phi2 = np.asarray(phi, dtype=complex)
    l = medium.l
    inner = np.exp(1j * chi * l) * phi2

    def piece(w0, w1, s, a):
        kappa = np.sqrt(complex(z) / a)
        length = s[-1]
        span = sin_over(kappa, length)
        w = (w0 * sin_over(kappa, length - s) + w1 * sin_over(kappa, s)) / span
        dw = (-w0 * np.cos(kappa * (length - s)) + w1 * np.cos(kappa * s)) / span
        return w, dw

    w_left, dw_left = piece(phi1, inner, grid.y_left, medium.a_minus)
    w_right, dw_right = piece(inner, np.exp(1j * chi) * phi1, grid.y_right - l, medium.a_plus)
    gauge_left = np.exp(-1j * chi * grid.y_left)
    gauge_right = np.exp(-1j * chi * grid.y_right)
    du_left = gauge_left * (dw_left - 1j * chi * w_left)
    du_right = gauge_right * (dw_right - 1j * chi * w_right)
    traces = np.array([du_left[0], du_left[-1], du_right[0], du_right[-1]])
    left = gauge_left * w_left
    right = gauge_right * w_right
    # exact vertex data
    left[0] = phi1
    left[-1] = phi2
    right[0] = phi2
    right[-1] = phi1
    return CellFunction(grid, left, right, traces)


def lift(medium: Medium, chi: float, phi, grid: CellGrid) -> CellFunction:
    """Pi_chi phi: the null solution of the maximal operator with vertex values phi."""
    return _boundary_solution(medium, chi, 0.0, phi, grid)


def neumann_trace(medium: Medium, chi: float, u: CellFunction) -> np.ndarray:
    u0, ul_minus, ul_plus, u1 = u.endpoint_values()
    d0, dl_minus, dl_plus, d1 = u.derivative_traces()
    a_minus, a_plus = medium.a_minus, medium.a_plus
    return np.array(
        [
            a_minus * (d0 + 1j * chi * u0) - a_plus * (d1 + 1j * chi * u1),
            a_plus * (dl_plus + 1j * chi * ul_plus) - a_minus * (dl_minus + 1j * chi * ul_minus),
        ]
    )


def m_entries(medium: Medium, chi: float, z: complex) -> tuple[complex, complex, complex]:
    """(M11 = M22, M12, M21) from the closed form, in the cancelled form regular at z = 0."""
    l = medium.l
    kappa_minus = np.sqrt(complex(z) / medium.a_minus)
    kappa_plus = np.sqrt(complex(z) / medium.a_plus)
    span_minus = sin_over(kappa_minus, l)
    span_plus = sin_over(kappa_plus, 1.0 - l)
    diag = -medium.a_minus * np.cos(kappa_minus * l) / span_minus - medium.a_plus * np.cos(
        kappa_plus * (1.0 - l)
    ) / span_plus
    off_minus = medium.a_minus / span_minus
    off_plus = medium.a_plus / span_plus
    m12 = off_minus * np.exp(1j * chi * l) + off_plus * np.exp(-1j * chi * (1.0 - l))
    m21 = off_minus * np.exp(-1j * chi * l) + off_plus * np.exp(1j * chi * (1.0 - l))
    return complex(diag), complex(m12), complex(m21)


def m_matrix(medium: Medium, chi: float, z: complex, tol_pole: float = 1e-8) -> MMatrix:
    check_pole(medium, z, tol_pole)
    diag, m12, m21 = m_entries(medium, chi, z)
    return MMatrix(matrix=np.array([[diag, m12], [m21, diag]]), z=complex(z))


def m_series_coefficients(medium: Medium, chi: float, n_terms: int, grid: CellGrid) -> np.ndarray:
    """Pi* (A0)^-j Pi for j = 0..n_terms, by quadrature against iterated Dirichlet resolvents."""
    lifted = [lift(medium, chi, e, grid) for e in BASIS]
    iterates = list(lifted)
    coefficients = np.empty((n_terms + 1, 2, 2), dtype=complex)
    for j in range(n_terms + 1):
        for m in range(2):
            for n in range(2):
                coefficients[j, m, n] = iterates[n].inner(lifted[m])
        if j < n_terms:
            iterates = [dirichlet_resolvent(medium, chi, 0.0, v) for v in iterates]
    return coefficients


def m_series_truncation(medium: Medium, chi: float, z: complex, n_terms: int, grid: CellGrid) -> MMatrix:
    radius = dirichlet_eigenvalues(medium, 1)[0]
    if abs(z) >= radius:
        raise SeriesDivergenceError(f"|z|={abs(z):g} is outside the series radius {radius:g}")
    coefficients = m_series_coefficients(medium, chi, n_terms, grid)
    powers = complex(z) ** np.arange(1, n_terms + 2)
    total = lambda_matrix(medium, chi) + np.tensordot(powers, coefficients, axes=1)
    return MMatrix(matrix=total, z=complex(z))


def solution_operator(
    medium: Medium,
    chi: float,
    z: complex,
    phi,
    grid: CellGrid,
    method: str = "direct",
    tol_pole: float = 1e-8,
    tol: float = 1e-14,
    max_terms: int = 400,
) -> CellFunction:
    check_pole(medium, z, tol_pole)
    if method == "direct":
        return _boundary_solution(medium, chi, z, phi, grid)
    if method != "neumann":
        raise ValueError(f"unknown solution operator route {method!r}")

    radius = dirichlet_eigenvalues(medium, 1)[0]
    if abs(z) >= radius:
        raise SeriesDivergenceError(f"|z|={abs(z):g} is outside the Neumann series radius {radius:g}")
    term = lift(medium, chi, phi, grid)
    total = term
    for _ in range(max_terms):
        term = complex(z) * dirichlet_resolvent(medium, chi, 0.0, term)
        total = total + term
        if term.norm() <= tol * max(total.norm(), 1e-300):
            return total
    raise NonConvergenceError(f"Neumann series for S(z) did not converge in {max_terms} terms")


def solution_operator_adjoint(
    medium: Medium, chi: float, z: complex, f: CellFunction, tol_pole: float = 1e-8
) -> np.ndarray:
    """S(conj z)* f as the vector of inner products <f, S(conj z) e_j>."""
    zbar = np.conj(complex(z))
    return np.array(
        [f.inner(solution_operator(medium, chi, zbar, e, f.grid, tol_pole=tol_pole)) for e in BASIS]
    )


def adjoint_via_trace(
    medium: Medium, chi: float, z: complex, f: CellFunction, tol_pole: float = 1e-8
) -> np.ndarray:
    """S(conj z)* f computed as Gamma_1 (A0 - z)^-1 f."""
    return neumann_trace(medium, chi, dirichlet_resolvent(medium, chi, z, f, tol_pole))


def apply_expression(medium: Medium, chi: float, u: CellFunction) -> tuple[np.ndarray, np.ndarray]:
    """-(d/dy + i chi) a (d/dy + i chi) u at interior nodes of both pieces, by central differences."""
    g = u.grid
    out = []
    for y, values, a, h in (
        (g.y_left, u.left, medium.a_minus, g.h_left),
        (g.y_right, u.right, medium.a_plus, g.h_right),
    ):
        w = np.exp(1j * chi * y) * values
        second = (w[2:] - 2.0 * w[1:-1] + w[:-2]) / h**2
        out.append(-a * np.exp(-1j * chi * y[1:-1]) * second)
    return out[0], out[1]


def green_identity_defect(
    medium: Medium,
    chi: float,
    u: CellFunction,
    image_u: CellFunction,
    v: CellFunction,
    image_v: CellFunction,
) -> complex:
    """<A u, v> - <u, A v> - <G1 u, G0 v> + <G0 u, G1 v> for known images A u, A v."""
    gamma1_u = neumann_trace(medium, chi, u)
    gamma1_v = neumann_trace(medium, chi, v)
    boundary = np.vdot(v.vertex_values(), gamma1_u) - np.vdot(gamma1_v, u.vertex_values())
    return image_u.inner(v) - u.inner(image_v) - boundary
