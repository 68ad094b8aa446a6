from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from dotenv import load_dotenv

from .errors import ConfigParseError
from .models import Medium
from .utils import json_dumps, parse_fraction, stable_hash

TRUE_VALUES = {"1", "true", "yes", "y", "on"}
ENV_PREFIX = "HOMOG_"

DEFAULT_TEST_MEDIA = "1,4,1/2;1,1,1/2;2,5,1/3"
Z_RULES = ("fixed", "sweep", "scaled")

SECTIONS: dict[str, tuple[str, ...]] = {
    "medium": ("a_minus", "a_plus", "l", "test_media"),
    "grid": ("grid_cells", "norm_grid_cells", "fd_sizes", "mode_count", "dispersion_modes"),
    "tolerances": ("tol_pole", "tol_root", "tol_exclude", "tol_singular", "tol_power", "cross_check"),
    "sweep": (
        "eps_grid",
        "alpha_grid",
        "chi_points",
        "chi_grid_n",
        "t_points",
        "chi_quadrature_n",
        "z_re",
        "z_im",
        "z_rule",
        "z_scale",
        "z_sweep_points",
        "seed",
        "workers",
    ),
    "output": ("output_dir",),
}


def _as_bool(value: str | None, default: bool = False) -> bool:
    if value is None:
        return default
    return value.strip().lower() in TRUE_VALUES


def _as_int(value: str | None, default: int) -> int:
    if value is None or not value.strip():
        return default
    return int(value)


def _as_float(value: str | None, default: float) -> float:
    if value is None or not value.strip():
        return default
    return parse_fraction(value)


def _as_float_list(value: str | None, default: list[float]) -> list[float]:
    if value is None or not value.strip():
        return list(default)
    return [parse_fraction(part) for part in value.split(",") if part.strip()]


def _as_int_list(value: str | None, default: list[int]) -> list[int]:
    if value is None or not value.strip():
        return list(default)
    return [int(part) for part in value.split(",") if part.strip()]


def parse_media(text: str) -> list[Medium]:
    media = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        parts = [parse_fraction(p) for p in chunk.split(",")]
        if len(parts) != 3:
            raise ValueError(f"a medium is written a_minus,a_plus,l; got {chunk!r}")
        media.append(Medium(*parts))
    return media


@dataclass
class Settings:
    a_minus: float = 1.0
    a_plus: float = 4.0
    l: float = 0.5
    test_media: str = DEFAULT_TEST_MEDIA

    grid_cells: int = 2048
    norm_grid_cells: int = 256
    fd_sizes: list[int] = field(default_factory=lambda: [256, 512, 1024, 2048])
    mode_count: int = 64
    dispersion_modes: int = 8

    tol_pole: float = 1e-8
    tol_root: float = 1e-13
    tol_exclude: float = 1e-6
    tol_singular: float = 1e-14
    tol_power: float = 1e-10
    cross_check: bool = True

    eps_grid: list[float] = field(default_factory=lambda: [2.0**-k for k in range(3, 9)])
    alpha_grid: list[float] = field(default_factory=lambda: [1.0, 1.5, 1.9])
    chi_points: int = 33
    chi_grid_n: int = 257
    t_points: int = 17
    chi_quadrature_n: int = 64
    z_re: float = -1.0
    z_im: float = 0.0
    z_rule: str = "fixed"
    z_scale: float = 1.0
    z_sweep_points: int = 4
    seed: int = 0
    workers: int = 1

    output_dir: Path = Path("reports")

    @property
    def medium(self) -> Medium:
        return Medium(self.a_minus, self.a_plus, self.l)

    @property
    def media(self) -> list[Medium]:
        return parse_media(self.test_media)

    @property
    def z(self) -> complex:
        return complex(self.z_re, self.z_im)

    def validate(self) -> None:
        try:
            self.medium
            self.media
        except ValueError as exc:
            raise ConfigParseError(str(exc)) from exc
        for name in ("tol_pole", "tol_root", "tol_exclude", "tol_singular", "tol_power"):
            if getattr(self, name) <= 0:
                raise ConfigParseError(f"{name} must be positive")
        for name in ("eps_grid", "alpha_grid", "fd_sizes"):
            values = getattr(self, name)
            if not values:
                raise ConfigParseError(f"{name} must not be empty")
            if name != "eps_grid" and list(values) != sorted(values):
                raise ConfigParseError(f"{name} must be sorted ascending")
        if list(self.eps_grid) != sorted(self.eps_grid, reverse=True) or min(self.eps_grid) <= 0:
            raise ConfigParseError("eps_grid must be positive and sorted from coarse to fine")
        for name in ("grid_cells", "norm_grid_cells", "mode_count", "dispersion_modes", "workers", "z_sweep_points"):
            if getattr(self, name) < 1:
                raise ConfigParseError(f"{name} must be at least 1")
        if self.z_rule not in Z_RULES:
            raise ConfigParseError(f"z_rule must be one of {', '.join(Z_RULES)}; got {self.z_rule!r}")
        if self.z_scale <= 0:
            raise ConfigParseError("z_scale must be positive")


_COERCE = {
    int: _as_int,
    float: _as_float,
    bool: _as_bool,
    str: lambda value, default: default if value is None else value.strip(),
    Path: lambda value, default: default if value is None or not value.strip() else Path(value.strip()),
}


def _coerce(name: str, raw: str | None, current: Any) -> Any:
    if isinstance(current, list):
        if current and isinstance(current[0], int):
            return _as_int_list(raw, current)
        return _as_float_list(raw, current)
    for kind, convert in _COERCE.items():
        if type(current) is kind or (kind is Path and isinstance(current, Path)):
            return convert(raw, current)
    raise ConfigParseError(f"no conversion for setting {name}")


def _apply_environment(settings: Settings) -> None:
    load_dotenv(override=False)
    for f in fields(settings):
        raw = os.getenv(ENV_PREFIX + f.name.upper())
        if raw is not None:
            try:
                setattr(settings, f.name, _coerce(f.name, raw, getattr(settings, f.name)))
            except ValueError as exc:
                raise ConfigParseError(f"{ENV_PREFIX}{f.name.upper()}: {exc}") from exc


def _line_of(lines: list[str], needle: str, section: str | None = None) -> int | None:
    current = None
    for number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            if section is None and current == needle:
                return number
            continue
        if section is not None and current == section and "=" in stripped:
            if stripped.split("=", 1)[0].strip().lower() == needle:
                return number
    return None


def _apply_file(settings: Settings, path: Path) -> None:
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigParseError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from exc

    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigParseError(f"unknown section [{section}]", _line_of(lines, section))
        for key, raw in parser.items(section):
            if key not in SECTIONS[section]:
                raise ConfigParseError(f"unknown key {key!r} in [{section}]", _line_of(lines, key, section))
            try:
                setattr(settings, key, _coerce(key, raw, getattr(settings, key)))
            except ValueError as exc:
                raise ConfigParseError(f"bad value for {key}: {exc}", _line_of(lines, key, section)) from exc


def load_settings(config_path: Path | None = None, overrides: dict[str, Any] | None = None) -> Settings:
    """Defaults, then HOMOG_* environment, then the config file, then CLI overrides."""
    settings = Settings()
    _apply_environment(settings)
    if config_path is not None:
        _apply_file(settings, Path(config_path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if not hasattr(settings, key):
            raise ConfigParseError(f"unknown setting {key!r}")
        setattr(settings, key, value)
    settings.validate()
    return settings


def config_hash(settings: Settings) -> str:
    return stable_hash(json_dumps(asdict(settings)))
