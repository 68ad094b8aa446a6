from __future__ import annotations

import logging
import math
from functools import lru_cache

import numpy as np
from scipy.linalg import svd
from scipy.optimize import brentq

from .cell import CellFunction, CellGrid
from .errors import RootNotBracketedError
from .medium import dirichlet_eigenvalues, dirichlet_poles, reduce_quasimomentum, vertex_sum_d
from .models import BlochBand, Medium
from .triple import m_entries, m_matrix
from .utils import sin_over

logger = logging.getLogger(__name__)

_RTOL = 4.0 * np.finfo(float).eps
_SCAN_POINTS = 256
_POLE_OFFSET = 1e-10
_POLE_MERGE = 1e-7
_CLUSTER = 1e-9


def transfer_matrix(a: float, length: float, k: float) -> np.ndarray:
    """Propagates (u, a u') across a layer of stiffness a for -(a u')' = k^2 u."""
    kappa = k / math.sqrt(a)
    span = sin_over(kappa, length)
    c = math.cos(kappa * length)
    return np.array([[c, span / a], [-(k**2) * span, c]])


def monodromy_matrix(medium: Medium, k: float) -> np.ndarray:
    left = transfer_matrix(medium.a_minus, medium.l, k)
    right = transfer_matrix(medium.a_plus, 1.0 - medium.l, k)
    return right @ left


def monodromy_discriminant(medium: Medium, k: float) -> float:
    if k < 0:
        raise ValueError("wavenumber must be nonnegative")
    return float(np.trace(monodromy_matrix(medium, k)))


def _phases(medium: Medium, k):
    theta_minus = k * medium.l / math.sqrt(medium.a_minus)
    theta_plus = k * (1.0 - medium.l) / math.sqrt(medium.a_plus)
    root = (medium.a_plus / medium.a_minus) ** 0.25
    contrast = (root - 1.0 / root) ** 2
    return theta_minus, theta_plus, contrast


def dispersion_residual(medium: Medium, chi: float, k):
    """Delta(k) - 2 cos(chi), written without cancellation near k = chi = 0."""
    theta_minus, theta_plus, contrast = _phases(medium, k)
    total = theta_minus + theta_plus
    return (
        4.0 * math.sin(chi / 2.0) ** 2
        - 4.0 * np.sin(total / 2.0) ** 2
        - contrast * np.sin(theta_minus) * np.sin(theta_plus)
    )


def dispersion_residual_derivative(medium: Medium, k):
    theta_minus, theta_plus, contrast = _phases(medium, k)
    alpha = medium.l / math.sqrt(medium.a_minus)
    beta = (1.0 - medium.l) / math.sqrt(medium.a_plus)
    return -2.0 * (alpha + beta) * np.sin(theta_minus + theta_plus) - contrast * (
        alpha * np.cos(theta_minus) * np.sin(theta_plus) + beta * np.sin(theta_minus) * np.cos(theta_plus)
    )


def det_m(medium: Medium, chi: float, z: complex, tol_pole: float = 1e-8) -> complex:
    return m_matrix(medium, chi, z, tol_pole).determinant


def m_branch(medium: Medium, chi: float, z: float, sign: float) -> float:
    """Upper (sign=+1) or lower (sign=-1) eigenvalue of the Hermitian M(z) at real z."""
    diag, m12, _ = m_entries(medium, chi, z)
    return diag.real + sign * abs(m12)


def _newton_polish(medium: Medium, chi: float, k: float, steps: int = 3) -> float:
    best = abs(dispersion_residual(medium, chi, k))
    for _ in range(steps):
        slope = dispersion_residual_derivative(medium, k)
        if slope == 0.0 or best == 0.0:
            break
        candidate = k - dispersion_residual(medium, chi, k) / slope
        value = abs(dispersion_residual(medium, chi, candidate))
        if value >= best:
            break
        k, best = candidate, value
    return k


def _lowest_by_monodromy(medium: Medium, chi: float) -> float | None:
    k_max = math.sqrt(dirichlet_eigenvalues(medium, 1)[0])
    ks = np.linspace(0.0, k_max, _SCAN_POINTS)
    values = dispersion_residual(medium, chi, ks)
    crossings = np.flatnonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)
    if crossings.size == 0:
        return None
    i = int(crossings[0])
    k = brentq(
        lambda s: dispersion_residual(medium, chi, s), ks[i], ks[i + 1], xtol=1e-300, rtol=_RTOL, maxiter=200
    )
    return _newton_polish(medium, chi, k) ** 2


def _lowest_by_m(medium: Medium, chi: float) -> float:
    upper = dirichlet_eigenvalues(medium, 1)[0] * (1.0 - _POLE_OFFSET)
    lo = m_branch(medium, chi, 0.0, 1.0)
    hi = m_branch(medium, chi, upper, 1.0)
    if not (lo < 0.0 < hi):
        raise RootNotBracketedError(f"no sign change of the upper M branch below the first pole at chi={chi}")
    return brentq(lambda z: m_branch(medium, chi, z, 1.0), 0.0, upper, xtol=1e-300, rtol=_RTOL, maxiter=200)


def lowest_eigenvalue(medium: Medium, chi: float, method: str = "monodromy") -> float:
    chi = reduce_quasimomentum(chi)
    if chi == 0.0:
        return 0.0
    if method == "m_matrix":
        return _lowest_by_m(medium, chi)
    if method != "monodromy":
        raise ValueError(f"unknown dispersion route {method!r}")
    value = _lowest_by_monodromy(medium, chi)
    if value is None:
        logger.debug("no monodromy sign change at chi=%s, using the M branch", chi)
        return _lowest_by_m(medium, chi)
    return value


def _roots_between(medium: Medium, chi: float, lo: float, hi: float, start_at_zero: bool) -> list[float]:
    roots = []
    scale = vertex_sum_d(medium)
    for sign in (1.0, -1.0):
        z_lo = lo if start_at_zero else lo * (1.0 + _POLE_OFFSET)
        z_hi = hi * (1.0 - _POLE_OFFSET)
        f_lo = m_branch(medium, chi, z_lo, sign)
        f_hi = m_branch(medium, chi, z_hi, sign)
        if start_at_zero and abs(f_lo) <= 1e-12 * scale:
            roots.append(0.0)
            continue
        if f_lo < 0.0 < f_hi:
            roots.append(
                brentq(lambda z: m_branch(medium, chi, z, sign), z_lo, z_hi, xtol=1e-300, rtol=_RTOL, maxiter=200)
            )
    return roots


def _pole_multiplicity(medium: Medium, chi: float, pole: float) -> int:
    t = monodromy_matrix(medium, math.sqrt(pole))
    sigma = svd(t - np.exp(1j * chi) * np.eye(2), compute_uv=False)
    threshold = 1e-8 * (1.0 + np.linalg.norm(t, 2))
    return int(np.sum(sigma < threshold))


def _bloch_function(medium: Medium, chi: float, lam: float, data: np.ndarray, grid: CellGrid) -> CellFunction:
    """Shoot (U, a U') from y = 0 and return u = exp(-i chi y) U on the grid."""

    def shoot(u0, f0, s, a):
        kappa = math.sqrt(lam / a)
        c = np.cos(kappa * s)
        span = sin_over(kappa, s)
        return u0 * c + f0 * span / a, -lam * u0 * span + f0 * c

    u0, f0 = data
    u_left, f_left = shoot(u0, f0, grid.y_left, medium.a_minus)
    u_right, f_right = shoot(u_left[-1], f_left[-1], grid.y_right - medium.l, medium.a_plus)
    pieces = []
    for y, u, f, a in ((grid.y_left, u_left, f_left, medium.a_minus), (grid.y_right, u_right, f_right, medium.a_plus)):
        gauge = np.exp(-1j * chi * y)
        pieces.append((gauge * u, gauge * (f / a - 1j * chi * u)))
    (left, d_left), (right, d_right) = pieces
    traces = np.array([d_left[0], d_left[-1], d_right[0], d_right[-1]])
    return CellFunction(grid, left, right, traces)


def _orthonormal_cluster(funcs: list[CellFunction]) -> list[CellFunction]:
    grid = funcs[0].grid
    phi = np.column_stack([f.vector for f in funcs])
    gram = phi.conj().T @ (grid.weights[:, None] * phi)
    values, vectors = np.linalg.eigh(gram)
    transform = vectors @ np.diag(values**-0.5) @ vectors.conj().T
    traces = np.column_stack([f.derivative_traces() for f in funcs]) @ transform
    mixed = phi @ transform
    out = []
    for j in range(len(funcs)):
        f = CellFunction.from_vector(grid, mixed[:, j], traces[:, j])
        anchor = f.left[0] if abs(f.left[0]) > 1e-8 else f.traces[0]
        phase = abs(anchor) / anchor if abs(anchor) > 0 else 1.0
        out.append(f * phase)
    return out


def _sorted_roots(medium: Medium, chi: float, count: int) -> list[float]:
    upper = dirichlet_eigenvalues(medium, count + 2)[-1]
    poles = dirichlet_poles(medium, upper)
    edges = np.concatenate([[0.0], poles])
    roots: list[float] = []
    for i in range(len(edges) - 1):
        roots.extend(_roots_between(medium, chi, edges[i], edges[i + 1], start_at_zero=(i == 0)))
    for pole in poles:
        mult = _pole_multiplicity(medium, chi, pole)
        if mult:
            roots = [r for r in roots if abs(r - pole) > _POLE_MERGE * pole]
            roots.extend([float(pole)] * mult)
    roots.sort()
    if len(roots) < count:
        raise RootNotBracketedError(f"found {len(roots)} of {count} band eigenvalues at chi={chi}")
    return roots[:count]


@lru_cache(maxsize=256)
def band_eigenvalues(medium: Medium, chi: float, count: int, grid: CellGrid | None = None) -> BlochBand:
    if count < 1:
        raise ValueError("count must be at least 1")
    chi = reduce_quasimomentum(chi)
    grid = grid or medium.grid(2048)
    roots = _sorted_roots(medium, chi, count)

    clusters: list[list[float]] = []
    for r in roots:
        if clusters and abs(r - clusters[-1][0]) <= _CLUSTER * max(abs(r), 1.0):
            clusters[-1].append(r)
        else:
            clusters.append([r])

    eigenfunctions: list[CellFunction] = []
    for cluster in clusters:
        lam = float(np.mean(cluster))
        t = monodromy_matrix(medium, math.sqrt(lam))
        _, _, vh = svd(t - np.exp(1j * chi) * np.eye(2))
        null = vh.conj().T[:, 2 - len(cluster):]
        funcs = [_bloch_function(medium, chi, lam, null[:, j], grid) for j in range(null.shape[1])]
        eigenfunctions.extend(_orthonormal_cluster(funcs))

    logger.debug("chi=%s: %d band eigenvalues up to %.6g", chi, count, roots[-1])
    return BlochBand(chi=chi, eigenvalues=np.asarray(roots), eigenfunctions=tuple(eigenfunctions))


def band_edges(medium: Medium, count: int, cells: int = 512) -> list[tuple[float, float]]:
    """Range of each of the first `count` bands, from its values at chi = 0 and chi = pi."""
    grid = medium.grid(cells)
    centre = band_eigenvalues(medium, 0.0, count, grid).eigenvalues
    edge = band_eigenvalues(medium, -math.pi, count, grid).eigenvalues
    return [(float(min(a, b)), float(max(a, b))) for a, b in zip(centre, edge)]
