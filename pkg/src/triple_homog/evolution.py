from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np
from scipy.linalg import eigvalsh, funm

from .cell import CellFunction, CellGrid
from .dispersion import band_eigenvalues
from .homogenisation import a_hom_closed_form, effective_fibre, parallel_lift, theta_projection
from .medium import dirichlet_eigenvalues, is_excluded
from .models import (
    BlochBand,
    EffectiveFibre,
    EnvelopeConstants,
    ErrorEnvelope,
    Medium,
    PropagatorRequest,
    SweepRecord,
)
from .utils import loglog_slope, sin_over

logger = logging.getLogger(__name__)


def sine_weight(lam, eps: float, t: float):
    """sin(sqrt(lam) t / eps) / (sqrt(lam) / eps), equal to t at lam = 0."""
    root = np.sqrt(np.clip(np.asarray(lam, dtype=float), 0.0, None))
    return sin_over(root / eps, t)


def cosine_weight(lam, eps: float, t: float):
    root = np.sqrt(np.clip(np.asarray(lam, dtype=float), 0.0, None))
    return np.cos(root * t / eps)


def truncation_tail_bound(medium: Medium, tail_norm: float, eps: float, t: float, mode_count: int) -> float:
    """Bound on the neglected modes: the next band eigenvalue is at least the (N-1)-th Dirichlet eigenvalue."""
    if mode_count < 2:
        return tail_norm * t
    floor = dirichlet_eigenvalues(medium, mode_count - 1)[-1]
    return tail_norm * min(t, eps / math.sqrt(floor))


def _band(req: PropagatorRequest) -> BlochBand:
    return band_eigenvalues(req.medium, req.chi, req.mode_count, req.datum.grid)


def _mode_sum(band: BlochBand, weights, coefficients) -> CellFunction:
    out = CellFunction.zeros(band.eigenfunctions[0].grid)
    for w, c, phi in zip(weights, coefficients, band.eigenfunctions):
        out = out + (w * c) * phi
    return out


def exact_fibre_propagator(req: PropagatorRequest) -> tuple[CellFunction, float]:
    band = _band(req)
    coefficients = band.coefficients(req.datum)
    out = _mode_sum(band, sine_weight(band.eigenvalues, req.eps, req.t), coefficients)
    captured = _mode_sum(band, np.ones(len(coefficients)), coefficients)
    tail = (req.datum - captured).norm()
    return out, truncation_tail_bound(req.medium, tail, req.eps, req.t, req.mode_count)


def first_order_weight(a_hom: float, eps: float, t: float) -> float:
    return float(sine_weight(a_hom, eps, t))


def second_order_weight(fibre: EffectiveFibre, eps: float, t: float, route: str = "matrix") -> float:
    """First diagonal entry of sqrt(2) eps A2^-1/2 sin(eps^-1 (2 A2)^1/2 t)."""
    if route == "funm":
        value = funm(fibre.second_order, lambda mu: 2.0 * sin_over(np.sqrt(2.0 * mu + 0j) / eps, t))
        return float(np.real(value[0, 0]))
    terms = [(fibre.z_minus, fibre.v_minus)]
    if route == "matrix":
        terms.append((fibre.z_plus, fibre.v_plus))
    elif route != "reduced":
        raise ValueError(f"unknown second-order route {route!r}")
    return float(sum(2.0 * v[0] ** 2 * sine_weight(z, eps, t) for z, v in terms))


def first_order_propagator(req: PropagatorRequest) -> CellFunction:
    weight = first_order_weight(a_hom_closed_form(req.medium, req.chi), req.eps, req.t)
    return weight * theta_projection(req.medium, req.chi, req.datum)


def second_order_propagator(req: PropagatorRequest, route: str = "matrix", cells: int = 2048) -> CellFunction:
    fibre = effective_fibre(req.medium, req.chi, cells)
    weight = second_order_weight(fibre, req.eps, req.t, route)
    return weight * theta_projection(req.medium, req.chi, req.datum)


def _lift_coordinates(band: BlochBand, medium: Medium, chi: float, grid: CellGrid) -> np.ndarray:
    """Coordinates of the normalised lift in the modes plus one orthogonal residual direction."""
    g = parallel_lift(medium, chi, grid)
    g = g / g.norm()
    gamma = band.coefficients(g)
    residual = g - _mode_sum(band, np.ones(len(gamma)), gamma)
    return np.append(gamma, residual.norm())


def fibre_propagator_errors(
    medium: Medium,
    chi: float,
    eps: float,
    times,
    mode_count: int = 64,
    grid: CellGrid | None = None,
    cells: int = 2048,
) -> tuple[np.ndarray, np.ndarray]:
    """Operator-norm errors of the first- and second-order propagators against the mode sum, per time."""
    grid = grid or medium.grid(cells)
    band = band_eigenvalues(medium, chi, mode_count, grid)
    gamma = _lift_coordinates(band, medium, chi, grid)
    projector = np.outer(gamma, np.conj(gamma))
    a_hom = a_hom_closed_form(medium, chi)
    fibre = effective_fibre(medium, chi, cells)
    first, second = [], []
    for t in np.atleast_1d(times):
        exact = np.diag(np.append(sine_weight(band.eigenvalues, eps, t), 0.0))
        for weight, out in ((first_order_weight(a_hom, eps, t), first), (second_order_weight(fibre, eps, t), second)):
            out.append(float(np.max(np.abs(eigvalsh(exact - weight * projector)))))
    return np.asarray(first), np.asarray(second)


def error_envelope(kind: str, eps: float, chi: float, t: float, alpha: float, constants: EnvelopeConstants) -> float:
    envelope = ErrorEnvelope(kind=kind, alpha=alpha, constants=constants)
    denominator = 4.0 if kind == "first" else 6.0
    threshold = eps ** ((alpha + 2.0) / denominator)
    if abs(chi) > threshold:
        return constants.k_outer * eps ** (1.0 - (alpha + 2.0) / denominator)
    power = envelope.alpha if kind == "first" else (alpha + 2.0) / 3.0
    horizon = t if chi == 0 else min(t, constants.k_prime * eps / abs(chi))
    return eps + constants.k * eps**power * horizon


def calibrate_envelope(
    kind: str, alpha: float, rows: list[tuple[float, float, float, float]], k_prime: float = 1.0, margin: float = 2.0
) -> EnvelopeConstants:
    """Smallest constants for which the envelope covers every (eps, chi, t, error) row, times a safety margin."""
    denominator = 4.0 if kind == "first" else 6.0
    power = alpha if kind == "first" else (alpha + 2.0) / 3.0
    inner, outer = [0.0], [0.0]
    for eps, chi, t, err in rows:
        threshold = eps ** ((alpha + 2.0) / denominator)
        if abs(chi) > threshold:
            outer.append(err / eps ** (1.0 - (alpha + 2.0) / denominator))
            continue
        horizon = t if chi == 0 else min(t, k_prime * eps / abs(chi))
        excess = max(err - eps, 0.0)
        if horizon > 0:
            inner.append(excess / (eps**power * horizon))
    return EnvelopeConstants(k=margin * max(inner), k_prime=k_prime, k_outer=margin * max(outer))


def time_grid(eps: float, points: int = 17, top: float = 2.0) -> np.ndarray:
    return eps ** -np.linspace(0.0, top, points)


def _envelope_rows(medium, eps_grid, chis_for, t_points, mode_count, cells, offset):
    rows = []
    for eps in eps_grid:
        times = time_grid(eps, t_points)[offset::2]
        for chi in chis_for(eps):
            first, second = fibre_propagator_errors(medium, chi, eps, times, mode_count, cells=cells)
            for t, e1, e2 in zip(times, first, second):
                rows.append((eps, chi, float(t), float(e1), float(e2)))
    return rows


def propagator_envelope_experiment(
    medium: Medium,
    eps_grid,
    alpha_first: float,
    alpha_second: float,
    t_points: int = 17,
    mode_count: int = 64,
    cells: int = 2048,
    delta: float = 1e-6,
) -> tuple[list[SweepRecord], dict[str, float]]:
    """Calibrate both envelopes on one half of the (chi, t) grid and validate on the other half."""

    def chis_for(shift: float):
        def chis(eps: float) -> list[float]:
            base = [eps ** ((alpha_first + 2.0) / 4.0), eps, eps ** ((alpha_second + 2.0) / 6.0), 0.5, 2.0]
            values = [shift * b for b in base]
            return [c for c in values if 0.0 < c < math.pi and not is_excluded(medium, c, delta)]

        return chis

    calibration = _envelope_rows(medium, eps_grid, chis_for(0.5), t_points, mode_count, cells, 0)
    validation = _envelope_rows(medium, eps_grid, chis_for(0.8), t_points, mode_count, cells, 1)
    first = calibrate_envelope("first", alpha_first, [(e, c, t, e1) for e, c, t, e1, _ in calibration])
    second = calibrate_envelope("second", alpha_second, [(e, c, t, e2) for e, c, t, _, e2 in calibration])

    records = []
    for eps, chi, t, e1, e2 in validation:
        records.append(
            SweepRecord(
                eps=eps,
                alpha=alpha_first,
                chi=chi,
                t=t,
                err_first=e1,
                err_second=e2,
                env_first=error_envelope("first", eps, chi, t, alpha_first, first),
                env_second=error_envelope("second", eps, chi, t, alpha_second, second),
            )
        )
    covered_first = float(np.mean([r.err_first <= r.env_first for r in records]))
    covered_second = float(np.mean([r.err_second <= r.env_second for r in records]))
    summary = {
        "covered_first": covered_first,
        "covered_second": covered_second,
        "k_first": first.k,
        "k_outer_first": first.k_outer,
        "k_second": second.k,
        "k_outer_second": second.k_outer,
    }
    return records, summary


def gelfand_transform(profile: Callable[[np.ndarray], np.ndarray], chi: float, grid: CellGrid, periods: int = 64) -> CellFunction:
    """(2 pi)^-1/2 sum_n v(y + n) exp(-i chi (y + n)) on the cell, summed over |n| <= periods."""
    shifts = np.arange(-periods, periods + 1)

    def fibre(y: np.ndarray) -> np.ndarray:
        x = y[:, None] + shifts[None, :]
        return np.sum(profile(x) * np.exp(-1j * chi * x), axis=1) / math.sqrt(2.0 * math.pi)

    return CellFunction.from_callable(grid, fibre)


def quadrature_nodes(n: int) -> np.ndarray:
    return -math.pi + 2.0 * math.pi * np.arange(n) / n


def inverse_gelfand(fibres: dict[float, CellFunction], x: np.ndarray, eps: float = 1.0) -> np.ndarray:
    """Periodic trapezoid over the quasimomentum nodes, evaluated at y = x / eps mod 1."""
    x = np.asarray(x, dtype=float)
    n = len(fibres)
    y = np.mod(x / eps, 1.0)
    out = np.zeros(x.shape, dtype=complex)
    for chi in sorted(fibres):
        out += np.exp(1j * chi * x / eps) * fibres[chi].evaluate(y)
    return out * (2.0 * math.pi / n) / math.sqrt(2.0 * math.pi)


def bump_datum(medium: Medium, chi: float, width: float, grid: CellGrid) -> CellFunction:
    """Gaussian in chi times the lowest Bloch eigenfunction."""
    phi = band_eigenvalues(medium, chi, 1, grid).eigenfunctions[0]
    return math.exp(-0.5 * (chi / width) ** 2) * phi


def gelfand_synthesis(
    medium: Medium,
    eps: float,
    t: float,
    datum: Callable[[float, CellGrid], CellFunction],
    chi_quadrature_n: int,
    x: np.ndarray,
    mode_count: int = 64,
    cells: int = 2048,
    kind: str = "second",
    cutoff: float = 1e-16,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Exact and homogenised fields on the line at time t, and their discrete L2 distance on x."""
    grid = medium.grid(cells)
    exact, approx = {}, {}
    zero = CellFunction.zeros(grid)
    for chi in quadrature_nodes(chi_quadrature_n):
        chi = float(chi)
        fibre = datum(chi, grid)
        if fibre.norm() < cutoff or is_excluded(medium, chi, 1e-12):
            exact[chi], approx[chi] = zero, zero
            continue
        req = PropagatorRequest(medium=medium, eps=eps, t=t, chi=chi, datum=fibre, mode_count=mode_count)
        exact[chi] = exact_fibre_propagator(req)[0]
        approx[chi] = second_order_propagator(req, cells=cells) if kind == "second" else first_order_propagator(req)
    u_exact = inverse_gelfand(exact, x, eps)
    u_approx = inverse_gelfand(approx, x, eps)
    spacing = float(np.mean(np.diff(x))) if len(x) > 1 else 1.0
    distance = float(np.sqrt(spacing * np.sum(np.abs(u_exact - u_approx) ** 2)))
    return u_exact, u_approx, distance


def full_line_bound(eps: float, t: float, alpha: float, constant: float = 1.0) -> float:
    return constant * max(eps ** ((alpha + 2.0) / 3.0) * t, eps ** ((4.0 - alpha) / 6.0))


def cauchy_solution(
    band: BlochBand, eps: float, t: float, u_init: CellFunction, v_init: CellFunction
) -> tuple[CellFunction, CellFunction]:
    """Mode-sum solution u(t) and velocity u'(t) of u'' + eps^-2 A u = 0."""
    a = band.coefficients(u_init)
    b = band.coefficients(v_init)
    lam = band.eigenvalues
    root = np.sqrt(np.clip(lam, 0.0, None)) / eps
    position = cosine_weight(lam, eps, t) * a + sine_weight(lam, eps, t) * b
    velocity = -root * np.sin(root * t) * a + cosine_weight(lam, eps, t) * b
    ones = np.ones(len(lam))
    return _mode_sum(band, ones, position), _mode_sum(band, ones, velocity)


def spectral_energy(band: BlochBand, eps: float, t: float, datum: CellFunction, dt: float = 1e-4) -> float:
    """Energy |u'|^2 + eps^-2 <A u, u> of the sine solution, with u' by central differences in t."""
    b = band.coefficients(datum)
    lam = band.eigenvalues
    position = sine_weight(lam, eps, t) * b
    velocity = (sine_weight(lam, eps, t + dt) - sine_weight(lam, eps, max(t - dt, 0.0))) * b / (dt + min(t, dt))
    return float(np.sum(np.abs(velocity) ** 2) + np.sum(lam * np.abs(position) ** 2) / eps**2)


def timescale_comparison(alpha1: float) -> dict[str, float]:
    if not 1.0 < alpha1 < 2.0:
        raise ValueError("alpha1 must lie in (1, 2)")
    alpha2 = 1.0 + 1.5 * alpha1
    return {
        "alpha1": alpha1,
        "alpha2": alpha2,
        "accuracy_exponent": (2.0 - alpha1) / 4.0,
        "horizon_first": alpha1,
        "horizon_second": (alpha2 + 2.0) / 3.0,
        "gap": 1.0 - alpha1 / 2.0,
    }


def crossing_time(times: np.ndarray, errors: np.ndarray, target: float) -> tuple[float, bool]:
    """First time the error exceeds the target; the last time (censored) if it never does."""
    above = np.flatnonzero(errors > target)
    if above.size == 0:
        return float(times[-1]), True
    return float(times[above[0]]), False


def timescale_experiment(
    medium: Medium,
    alpha1: float,
    eps_grid,
    mode_count: int = 64,
    cells: int = 2048,
    t_points: int = 48,
    accuracy_factor: float = 1.0,
) -> tuple[list[SweepRecord], dict[str, float]]:
    """Paired crossing times of the first- and second-order channels at matched accuracy."""
    plan = timescale_comparison(alpha1)
    alpha2 = plan["alpha2"]
    records = []
    for eps in eps_grid:
        target = accuracy_factor * eps ** plan["accuracy_exponent"]
        times = time_grid(eps, t_points, top=2.5)
        chis_first = [eps ** ((alpha1 + 2.0) / 4.0) * s for s in (0.25, 0.5, 1.0)]
        chis_second = [eps ** ((alpha2 + 2.0) / 6.0) * s for s in (0.25, 0.5, 1.0)]
        worst_first = np.max([fibre_propagator_errors(medium, c, eps, times, mode_count, cells=cells)[0] for c in chis_first], axis=0)
        worst_second = np.max([fibre_propagator_errors(medium, c, eps, times, mode_count, cells=cells)[1] for c in chis_second], axis=0)
        t_first, censored_first = crossing_time(times, worst_first, target)
        t_second, censored_second = crossing_time(times, worst_second, target)
        logger.info("eps=%.4g crossing times %.4g (first) %.4g (second)", eps, t_first, t_second)
        records.append(
            SweepRecord(
                eps=eps,
                alpha=alpha1,
                extra={
                    "t_first": t_first,
                    "t_second": t_second,
                    "censored_first": float(censored_first),
                    "censored_second": float(censored_second),
                    "target": target,
                },
            )
        )
    # censored times are lower bounds; fit the rest
    uncensored = [r for r in records if not (r.extra["censored_first"] or r.extra["censored_second"])]
    ratios = [r.extra["t_second"] / r.extra["t_first"] for r in uncensored]
    measured_gap = -loglog_slope([r.eps for r in uncensored], ratios) if len(uncensored) > 1 else math.nan
    if len(uncensored) < len(records):
        logger.warning("alpha1=%g: %d of %d eps values censored", alpha1, len(records) - len(uncensored), len(records))
    summary = dict(plan)
    summary["fit_points"] = len(uncensored)
    summary["censored"] = len(records) - len(uncensored)
    summary["measured_gap"] = measured_gap
    summary["gap_error"] = abs(measured_gap - plan["gap"])
    return records, summary
