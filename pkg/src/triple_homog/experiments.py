from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Any

import numpy as np

from .config import Settings, config_hash
from .dispersion import band_eigenvalues, lowest_eigenvalue
from .evolution import (
    bump_datum,
    full_line_bound,
    gelfand_synthesis,
    propagator_envelope_experiment,
    spectral_energy,
    timescale_experiment,
)
from .homogenisation import (
    a_hom_quadratic_coeff,
    a_hom_quartic_coeff,
    effective_fibre,
    printed_quartic_coeff,
    quartic_coeff_exact,
)
from .medium import harmonic_mean, is_excluded
from .models import Medium, SweepRecord
from .pool import CellOutcome, run_cells
from .reports import record_row, write_csv, write_summary
from .resolvent import (
    admissible_z,
    fit_rate,
    resolvent_error_cell,
    second_order_exponent,
    spectral_distance_experiment,
)
from .selftest import CHECKS, check_a_hat0_routes, check_a_hom_routes, check_pi_adjoint, run_check

logger = logging.getLogger(__name__)

TIMESCALE_ALPHAS = (1.25, 1.5, 1.75)


def _new_stats(command: str, settings: Settings) -> dict[str, Any]:
    return {
        "command": command,
        "config_sha256": config_hash(settings),
        "artifacts": [],
        "gates": {},
        "failures": [],
    }


def _collect(outcomes: list[CellOutcome], stats: dict[str, Any]) -> list[Any]:
    results = []
    for outcome in outcomes:
        if outcome.error is not None:
            stats["failures"].append({"cell": list(outcome.key), "error": outcome.error})
            continue
        results.append(outcome.result)
    return results


def _csv(settings: Settings, stats: dict[str, Any], name: str, fieldnames: list[str], rows) -> Path:
    path = write_csv(settings.output_dir / name, fieldnames, rows, stats["config_sha256"])
    stats["artifacts"].append(str(path))
    return path


def finish(settings: Settings, stats: dict[str, Any]) -> dict[str, Any]:
    stats["passed"] = bool(stats["gates"]) and all(stats["gates"].values()) and not stats["failures"]
    summary = write_summary(settings.output_dir, stats["command"], stats)
    stats["artifacts"].append(str(summary))
    return stats


def _media_index(settings: Settings) -> dict[str, str]:
    """File suffix m<i> for each test medium, in config order."""
    return {f"m{index}": medium.label for index, medium in enumerate(settings.media)}


def _band_cell(medium: Medium, chi: float, count: int) -> list[float]:
    band = band_eigenvalues(medium, chi, count, medium.grid(64))
    return [float(v) for v in band.eigenvalues]


def _lowest_routes(medium: Medium, chi: float) -> float:
    monodromy = lowest_eigenvalue(medium, chi, "monodromy")
    m_route = lowest_eigenvalue(medium, chi, "m_matrix")
    return abs(monodromy - m_route) / max(abs(monodromy), 1e-300)


def run_dispersion(settings: Settings) -> dict[str, Any]:
    stats = _new_stats("dispersion", settings)
    distance_rows, slopes = [], {}
    small_chi = np.geomspace(1e-3, 1e-1, settings.chi_points)
    for medium in settings.media:
        records, slope = spectral_distance_experiment(medium, small_chi)
        slopes[medium.label] = slope
        distance_rows.extend(record_row(r, medium=medium.label) for r in records)
        stats["gates"][f"distance_slope[{medium.label}]"] = abs(slope - 4.0) <= 0.2
    stats["distance_slopes"] = slopes
    _csv(settings, stats, "spectral_distance.csv", ["medium", "chi", "distance"], distance_rows)

    chis = np.linspace(-math.pi, math.pi, settings.chi_grid_n)
    cells = [
        ((medium.label, float(chi)), {"medium": medium, "chi": float(chi), "count": settings.dispersion_modes})
        for medium in settings.media
        for chi in chis
    ]
    band_rows: dict[str, list[dict[str, float]]] = {medium.label: [] for medium in settings.media}
    for outcome in run_cells(_band_cell, cells, settings.workers):
        if outcome.error is not None:
            stats["failures"].append({"cell": list(outcome.key), "error": outcome.error})
            continue
        label, chi = outcome.key
        row = {"chi": chi}
        row.update({f"lambda_{j + 1}": v for j, v in enumerate(outcome.result)})
        band_rows[label].append(row)
    columns = ["chi"] + [f"lambda_{j + 1}" for j in range(settings.dispersion_modes)]
    stats["media"] = _media_index(settings)
    for index, medium in enumerate(settings.media):
        _csv(settings, stats, f"dispersion_m{index}.csv", columns, band_rows[medium.label])

    route_cells = [
        ((medium.label, float(chi)), {"medium": medium, "chi": float(chi)})
        for medium in settings.media
        for chi in np.linspace(0.05, math.pi - 0.05, settings.chi_points)
    ]
    discrepancies = _collect(run_cells(_lowest_routes, route_cells, settings.workers), stats)
    stats["lowest_route_discrepancy"] = max(discrepancies, default=math.nan)
    stats["gates"]["lowest_routes_agree"] = bool(discrepancies) and max(discrepancies) <= 1e-10
    return finish(settings, stats)


def _homogenised_cell(medium: Medium, chi: float, cells: int) -> dict[str, Any]:
    fibre = effective_fibre(medium, chi, cells)
    return {
        "chi": chi,
        "a_hom": fibre.a_hom,
        "a_hat0": fibre.a_hat0,
        "z_minus": fibre.z_minus,
        "z_plus": fibre.z_plus,
    }


def _bulk_scalar_gate(settings: Settings, stats: dict[str, Any]) -> bool:
    """Both routes to the bulk scalar must agree before anything that uses it runs."""
    outcome = check_a_hat0_routes(settings)
    stats["a_hat0_routes"] = outcome
    stats["gates"]["a_hat0_routes"] = outcome["passed"]
    if not outcome["passed"]:
        logger.error("bulk scalar routes disagree by %.3e, %s not run", outcome["value"], stats["command"])
    return outcome["passed"]


def run_homogenize(settings: Settings) -> dict[str, Any]:
    stats = _new_stats("homogenize", settings)
    if not _bulk_scalar_gate(settings, stats):
        return finish(settings, stats)

    coefficients = {}
    for medium in settings.media:
        quadratic = a_hom_quadratic_coeff(medium)
        target = harmonic_mean(medium)
        coefficients[medium.label] = {
            "harmonic_mean": target,
            "quadratic": quadratic,
            "quartic_numeric": a_hom_quartic_coeff(medium),
            "quartic_exact": quartic_coeff_exact(medium),
            "quartic_printed": printed_quartic_coeff(medium, corrected=False),
            "quartic_printed_corrected": printed_quartic_coeff(medium, corrected=True),
        }
        stats["gates"][f"quadratic_coeff[{medium.label}]"] = abs(quadratic - target) <= 1e-6 * target
    stats["coefficients"] = coefficients
    stats["media"] = _media_index(settings)

    cells = [
        ((medium.label, float(chi)), {"medium": medium, "chi": float(chi), "cells": settings.grid_cells})
        for medium in settings.media
        for chi in np.linspace(0.05, math.pi - 0.05, settings.chi_points)
        if not is_excluded(medium, chi, settings.tol_exclude)
    ]
    rows: dict[str, list[dict[str, Any]]] = {medium.label: [] for medium in settings.media}
    for outcome in run_cells(_homogenised_cell, cells, settings.workers):
        if outcome.error is not None:
            stats["failures"].append({"cell": list(outcome.key), "error": outcome.error})
            continue
        row = dict(outcome.result)
        row["quartic_coeff"] = coefficients[outcome.key[0]]["quartic_numeric"]
        rows[outcome.key[0]].append(row)
    columns = ["chi", "a_hom", "a_hat0", "z_minus", "z_plus", "quartic_coeff"]
    for index, medium in enumerate(settings.media):
        _csv(settings, stats, f"homogenize_m{index}.csv", columns, rows[medium.label])

    for name, check in (("a_hom_routes", check_a_hom_routes), ("pi_adjoint_identity", check_pi_adjoint)):
        outcome = check(settings)
        stats[name] = outcome
        stats["gates"][name] = outcome["passed"]
    return finish(settings, stats)


def run_resolvent_error(settings: Settings, alphas: list[float], order: str = "both") -> dict[str, Any]:
    stats = _new_stats("resolvent-error", settings)
    kinds = ("first", "second") if order == "both" else (order,)
    if "second" in kinds and not _bulk_scalar_gate(settings, stats):
        return finish(settings, stats)
    upper = {"first": 2.0, "second": 4.0}
    cells = []
    for kind in kinds:
        for alpha in alphas:
            if not 0.0 < alpha < upper[kind]:
                logger.warning("alpha=%s is outside the %s-order range, skipped", alpha, kind)
                continue
            for eps in settings.eps_grid:
                kwargs = {
                    "medium": settings.medium,
                    "eps": eps,
                    "alpha": alpha,
                    "zs": admissible_z(settings.z_rule, kind, eps, alpha, settings.z, settings.z_scale, settings.z_sweep_points),
                    "kind": kind,
                    "norm_cells": settings.norm_grid_cells,
                    "cells": settings.grid_cells,
                    "outer_points": settings.chi_points,
                    "delta": settings.tol_exclude,
                    "cross_check": settings.cross_check,
                }
                cells.append(((kind, alpha, -eps), kwargs))
    stats["z_rule"] = settings.z_rule

    grouped: dict[tuple[str, float], list[SweepRecord]] = {}
    for outcome in run_cells(resolvent_error_cell, cells, settings.workers):
        if outcome.error is not None:
            stats["failures"].append({"cell": list(outcome.key), "error": outcome.error})
            continue
        kind, alpha, _ = outcome.key
        grouped.setdefault((kind, alpha), []).append(outcome.result)

    rows, fits = [], {}
    for (kind, alpha), records in sorted(grouped.items()):
        column = f"err_{kind}"
        exponent = alpha if kind == "first" else second_order_exponent(alpha)
        slope, constant = fit_rate(records, column)
        bound = max(getattr(r, column) / r.eps**exponent for r in records)
        fits[f"{kind}[{alpha:g}]"] = {"slope": slope, "constant": constant, "exponent": exponent, "bound_constant": bound}
        stats["gates"][f"{kind}_slope[{alpha:g}]"] = slope >= exponent - 0.1
        for r in records:
            row = record_row(r, kind=kind)
            row[f"envelope_{kind}"] = bound * r.eps**exponent
            rows.append(row)
    stats["fits"] = fits
    fieldnames = ["kind", "alpha", "eps", "chi", "z_re", "z_im", "err_first", "err_second", "envelope_first", "envelope_second"]
    _csv(settings, stats, "resolvent_error.csv", fieldnames, rows)
    return finish(settings, stats)


def run_evolve(settings: Settings, alpha: float = 1.0, width: float = 0.3) -> dict[str, Any]:
    """Full-line synthesis of both channels against the bound, with quadrature refinement and energy checks.

    Times are chosen so that the packet travels at most n/8 cells, which keeps the
    n-node quadrature free of aliasing on the sampled window of n/4 cells each side.
    """
    stats = _new_stats("evolve", settings)
    medium = settings.medium
    n = settings.chi_quadrature_n
    speed = math.sqrt(max(medium.a_minus, medium.a_plus))

    def datum(chi: float, grid):
        return bump_datum(medium, chi, width, grid)

    rows = []
    for eps in settings.eps_grid[:3]:
        x = eps * np.linspace(-n / 4.0, n / 4.0, 8 * n + 1)
        for t in eps * n / (8.0 * speed) * np.array([0.0, 0.5, 1.0]):
            u_exact, _, distance = gelfand_synthesis(medium, eps, t, datum, n, x, settings.mode_count, settings.grid_cells)
            refined, _, _ = gelfand_synthesis(medium, eps, t, datum, 2 * n, x, settings.mode_count, settings.grid_cells)
            scale = max(float(np.max(np.abs(refined))), 1e-300)
            rows.append(
                {
                    "eps": eps,
                    "alpha": alpha,
                    "t": t,
                    "distance": distance,
                    "bound": full_line_bound(eps, t, alpha),
                    "refinement_change": float(np.max(np.abs(u_exact - refined))) / scale if t > 0 else 0.0,
                }
            )
            logger.info("eps=%.4g t=%.4g full-line distance %.3e", eps, t, distance)

    positive = [r for r in rows if r["t"] > 0]
    constant = max((r["distance"] / r["bound"] for r in positive), default=0.0)
    for r in rows:
        r["fitted_bound"] = constant * r["bound"]
    stats["fitted_constant"] = constant
    stats["gates"]["zero_at_t0"] = all(r["distance"] == 0.0 for r in rows if r["t"] == 0.0)
    stats["max_refinement_change"] = max((r["refinement_change"] for r in rows), default=0.0)
    stats["gates"]["quadrature_refinement"] = stats["max_refinement_change"] <= 1e-6
    _csv(settings, stats, "evolve.csv", ["eps", "alpha", "t", "distance", "bound", "fitted_bound", "refinement_change"], rows)

    grid = medium.grid(settings.grid_cells)
    chi, eps = 0.5, settings.eps_grid[0]
    band = band_eigenvalues(medium, chi, settings.mode_count, grid)
    start = bump_datum(medium, chi, width, grid)
    energies = [spectral_energy(band, eps, t, start) for t in np.linspace(0.05, 10.0, 21)]
    drift = (max(energies) - min(energies)) / max(energies)
    stats["energy_drift"] = drift
    stats["gates"]["energy_conserved"] = drift <= 1e-6
    return finish(settings, stats)


def run_envelope_sweep(settings: Settings, alpha_first: float = 1.0, alpha_second: float = 2.0) -> dict[str, Any]:
    stats = _new_stats("sweep", settings)
    stats["kind"] = "envelope"
    records, summary = propagator_envelope_experiment(
        settings.medium,
        settings.eps_grid,
        alpha_first,
        alpha_second,
        settings.t_points,
        settings.mode_count,
        settings.grid_cells,
        settings.tol_exclude,
    )
    stats.update(summary)
    stats["gates"]["first_envelope_covers"] = summary["covered_first"] == 1.0
    stats["gates"]["second_envelope_covers"] = summary["covered_second"] == 1.0
    rows = []
    for r in records:
        row = record_row(r, alpha_second=alpha_second)
        row["err_exact_vs_first"] = r.err_first
        row["err_exact_vs_second"] = r.err_second
        rows.append(row)
    fieldnames = ["eps", "alpha", "alpha_second", "chi", "t", "err_exact_vs_first", "err_exact_vs_second", "env_first", "env_second"]
    _csv(settings, stats, "envelope_sweep.csv", fieldnames, rows)
    return finish(settings, stats)


def _timescale_cell(medium: Medium, alpha1: float, eps_grid: list[float], mode_count: int, cells: int):
    return timescale_experiment(medium, alpha1, eps_grid, mode_count, cells)


def run_timescale_sweep(settings: Settings) -> dict[str, Any]:
    stats = _new_stats("sweep", settings)
    stats["kind"] = "timescale"
    eps_grid = [e for e in settings.eps_grid if 2.0**-6 <= e <= 2.0**-4] or list(settings.eps_grid[:3])
    cells = [
        ((alpha1,), {"medium": settings.medium, "alpha1": alpha1, "eps_grid": eps_grid, "mode_count": settings.mode_count, "cells": settings.grid_cells})
        for alpha1 in TIMESCALE_ALPHAS
    ]
    rows, summaries = [], {}
    for outcome in run_cells(_timescale_cell, cells, settings.workers):
        if outcome.error is not None:
            stats["failures"].append({"cell": list(outcome.key), "error": outcome.error})
            continue
        records, summary = outcome.result
        alpha1 = outcome.key[0]
        summaries[f"{alpha1:g}"] = summary
        stats["gates"][f"gap[{alpha1:g}]"] = summary["fit_points"] >= 2 and summary["gap_error"] <= 0.15
        rows.extend(record_row(r) for r in records)
    stats["timescales"] = summaries
    fieldnames = ["alpha", "eps", "t_first", "t_second", "censored_first", "censored_second", "target"]
    _csv(settings, stats, "timescale_sweep.csv", fieldnames, rows)
    return finish(settings, stats)


def run_selftest(settings: Settings) -> dict[str, Any]:
    stats = _new_stats("selftest", settings)
    cells = [((name,), {"name": name, "settings": settings}) for name in CHECKS]
    checks = {}
    for outcome in run_cells(run_check, cells, settings.workers):
        name = outcome.key[0]
        if outcome.error is not None:
            stats["failures"].append({"cell": [name], "error": outcome.error})
            stats["gates"][name] = False
            continue
        checks[name] = outcome.result
        stats["gates"][name] = outcome.result["passed"]
    stats["checks"] = checks
    return finish(settings, stats)
