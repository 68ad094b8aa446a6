from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from typing import Any

import numpy as np
from scipy.integrate import cumulative_simpson


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def stable_hash(value: str) -> str:
    return hashlib.sha256(value.encode("utf-8")).hexdigest()


def json_dumps(value: dict[str, Any]) -> str:
    return json.dumps(value, ensure_ascii=True, sort_keys=True, default=str)


def format_float(value: float) -> str:
    return f"{float(value):.16e}"


def sin_over(k, x):
    """sin(k x) / k, entire in k and equal to x at k = 0; k may be complex."""
    return x * np.sinc(np.asarray(k) * x / np.pi)


def loglog_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = (x > 0) & (y > 0) & np.isfinite(y)
    if int(mask.sum()) < 2:
        raise ValueError("need at least two positive points for a log-log fit")
    slope, _ = np.polyfit(np.log(x[mask]), np.log(y[mask]), 1)
    return float(slope)


def parse_fraction(text: str) -> float:
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def cumulative_integral(values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Cumulative Simpson integral along axis 0, starting at 0; complex input allowed."""
    values = np.asarray(values)
    re = cumulative_simpson(values.real, x=x, axis=0, initial=0)
    if not np.iscomplexobj(values):
        return re
    im = cumulative_simpson(values.imag, x=x, axis=0, initial=0)
    return re + 1j * im
