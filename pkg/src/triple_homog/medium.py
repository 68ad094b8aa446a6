from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateCouplingError
from .models import Medium


def vertex_sum_d(medium: Medium) -> float:
    return medium.a_minus / medium.l + medium.a_plus / (1.0 - medium.l)


def coupling_xi(medium: Medium, chi: float) -> complex:
    l = medium.l
    return (medium.a_minus / l) * np.exp(-1j * chi * l) + (medium.a_plus / (1.0 - l)) * np.exp(1j * chi * (1.0 - l))


def checked_coupling(medium: Medium, chi: float, tol: float = 1e-12) -> complex:
    xi = coupling_xi(medium, chi)
    if abs(xi) <= tol * vertex_sum_d(medium):
        raise DegenerateCouplingError(f"|xi| vanishes at chi={chi!r} for medium {medium.label}")
    return xi


def reduce_quasimomentum(chi: float) -> float:
    return (float(chi) + math.pi) % (2.0 * math.pi) - math.pi


def harmonic_mean(medium: Medium) -> float:
    return 1.0 / (medium.l / medium.a_minus + (1.0 - medium.l) / medium.a_plus)


def dirichlet_eigenvalues(medium: Medium, count: int) -> np.ndarray:
    """The `count` smallest Dirichlet eigenvalues of both intervals, sorted, with multiplicity."""
    m = np.arange(1, count + 1, dtype=float)
    left = medium.a_minus * (np.pi * m / medium.l) ** 2
    right = medium.a_plus * (np.pi * m / (1.0 - medium.l)) ** 2
    return np.sort(np.concatenate([left, right]))[:count]


def dirichlet_poles(medium: Medium, upper: float) -> np.ndarray:
    """Distinct Dirichlet eigenvalues up to and including `upper`."""
    poles = []
    for a, length in ((medium.a_minus, medium.l), (medium.a_plus, 1.0 - medium.l)):
        m_max = int(math.sqrt(max(upper, 0.0) / a) * length / math.pi) + 1
        m = np.arange(1, m_max + 1, dtype=float)
        values = a * (np.pi * m / length) ** 2
        poles.extend(values[values <= upper * (1.0 + 1e-12)])
    poles = np.sort(np.asarray(poles, dtype=float))
    if poles.size == 0:
        return poles
    keep = np.concatenate([[True], np.diff(poles) > 1e-12 * poles[1:]])
    return poles[keep]


def pole_distance(medium: Medium, z: complex) -> float:
    """Relative distance from z to the nearest Dirichlet eigenvalue."""
    nearby = dirichlet_poles(medium, 2.0 * abs(z) + 1.0)
    first = dirichlet_eigenvalues(medium, 1)[0]
    if nearby.size == 0:
        nearby = np.array([first])
    return float(np.min(np.abs(z - nearby) / nearby))


def degenerate_quasimomenta(medium: Medium) -> list[float]:
    p = medium.a_minus / medium.l
    q = medium.a_plus / (1.0 - medium.l)
    if math.isclose(p, q, rel_tol=1e-12):
        return [-math.pi, math.pi]
    return []


def is_excluded(medium: Medium, chi: float, delta: float) -> bool:
    return any(abs(chi - chi0) < delta for chi0 in degenerate_quasimomenta(medium))
