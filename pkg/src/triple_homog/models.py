from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cell import CellFunction, CellGrid


@dataclass(frozen=True)
class Medium:
    a_minus: float
    a_plus: float
    l: float

    def __post_init__(self) -> None:
        if not (self.a_minus > 0 and self.a_plus > 0):
            raise ValueError(f"phase stiffnesses must be positive, got {self.a_minus}, {self.a_plus}")
        if not 0.0 < self.l < 1.0:
            raise ValueError(f"interface position must lie in (0, 1), got {self.l}")

    def reflected(self) -> Medium:
        return Medium(a_minus=self.a_plus, a_plus=self.a_minus, l=1.0 - self.l)

    def grid(self, cells: int) -> CellGrid:
        return CellGrid.for_interface(self.l, cells)

    @property
    def label(self) -> str:
        return f"{self.a_minus:g},{self.a_plus:g},{self.l:.6g}"


@dataclass(frozen=True)
class Quasimomentum:
    chi: float

    def __post_init__(self) -> None:
        reduced = (float(self.chi) + math.pi) % (2.0 * math.pi) - math.pi
        object.__setattr__(self, "chi", reduced)


@dataclass(frozen=True, eq=False)
class MMatrix:
    matrix: np.ndarray
    z: complex

    @property
    def determinant(self) -> complex:
        return complex(np.linalg.det(self.matrix))


@dataclass(frozen=True, eq=False)
class LambdaEigen:
    mu_parallel: float
    mu_perp: float
    psi_parallel: np.ndarray
    psi_perp: np.ndarray


@dataclass(frozen=True, eq=False)
class BlochBand:
    chi: float
    eigenvalues: np.ndarray
    eigenfunctions: tuple[CellFunction, ...]

    def coefficients(self, f: CellFunction) -> np.ndarray:
        return np.array([f.inner(phi) for phi in self.eigenfunctions])


@dataclass(frozen=True, eq=False)
class EffectiveFibre:
    """First- and second-order effective data at one quasimomentum.

    z_minus and z_plus are stored without the eps**-2 factor, so that the
    eigenvalues of ``second_order`` are z_minus / 2 and z_plus / 2.
    """

    chi: float
    a_hom: float
    a_hat0: float
    second_order: np.ndarray
    z_minus: float
    z_plus: float
    v_minus: np.ndarray
    v_plus: np.ndarray

    def scaled(self, eps: float) -> tuple[float, float]:
        return self.z_minus / eps**2, self.z_plus / eps**2


@dataclass(frozen=True)
class JacobiDilation:
    c: float
    q0: float
    q1: float
    b1: float

    def recurrence_residuals(self, a_hom: float, a_hat0: float, eps: float) -> tuple[float, float, float]:
        first = self.b1**2 / self.q1 - self.q0 + a_hom / eps**2
        second = self.c * (1.0 + self.b1**2 / self.q1**2) - 1.0
        third = self.c**2 * self.b1**2 / self.q1**3 - eps**2 / a_hat0
        return first, second, third


@dataclass(frozen=True, eq=False)
class PropagatorRequest:
    medium: Medium
    eps: float
    t: float
    chi: float
    datum: CellFunction
    mode_count: int = 64

    def __post_init__(self) -> None:
        if self.mode_count < 1:
            raise ValueError("mode_count must be at least 1")
        if not (self.eps > 0 and math.isfinite(self.t) and self.t >= 0):
            raise ValueError("need eps > 0 and a finite t >= 0")


@dataclass(frozen=True)
class EnvelopeConstants:
    k: float
    k_prime: float
    k_outer: float


@dataclass(frozen=True)
class ErrorEnvelope:
    kind: str
    alpha: float
    constants: EnvelopeConstants

    def __post_init__(self) -> None:
        upper = {"first": 2.0, "second": 4.0}.get(self.kind)
        if upper is None:
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if not 0.0 < self.alpha < upper:
            raise ValueError(f"alpha must lie in (0, {upper:g}) for the {self.kind} envelope")


@dataclass(frozen=True)
class SweepRecord:
    eps: float = math.nan
    alpha: float = math.nan
    chi: float = math.nan
    t: float = math.nan
    z: complex = complex(math.nan, math.nan)
    err_first: float = math.nan
    err_second: float = math.nan
    env_first: float = math.nan
    env_second: float = math.nan
    extra: dict[str, float] = field(default_factory=dict, compare=False)


@dataclass(frozen=True, eq=False)
class FdFibreMatrix:
    """Cell-centred periodic discretisation of the fibre operator on n cells of width h."""

    medium: Medium
    chi: float
    n: int
    matrix: np.ndarray
    averaging: str = "harmonic"

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def centres(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h
