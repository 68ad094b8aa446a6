from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable

from .models import SweepRecord
from .utils import format_float, utc_now_iso


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return format_float(value)
    if hasattr(value, "__float__"):
        return format_float(float(value))
    return str(value)


def write_csv(path: Path, fieldnames: list[str], rows: Iterable[dict[str, Any]], config_hash: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="ascii", newline="") as f:
        f.write(f"# config_sha256={config_hash}\n")
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({name: _cell(row.get(name, math.nan)) for name in fieldnames})
    return path


def read_csv(path: Path) -> tuple[str, list[dict[str, str]]]:
    """Config hash from the comment line and the data rows."""
    with path.open("r", encoding="ascii", newline="") as f:
        first = f.readline().strip()
        if not first.startswith("# config_sha256="):
            raise ValueError(f"{path} has no config hash line")
        return first.split("=", 1)[1], list(csv.DictReader(f))


def record_row(record: SweepRecord, **labels: Any) -> dict[str, Any]:
    row = {
        "eps": record.eps,
        "alpha": record.alpha,
        "chi": record.chi,
        "t": record.t,
        "z_re": record.z.real,
        "z_im": record.z.imag,
        "err_first": record.err_first,
        "err_second": record.err_second,
        "env_first": record.env_first,
        "env_second": record.env_second,
    }
    row.update(record.extra)
    row.update(labels)
    return row


def write_summary(output_dir: Path, command: str, stats: dict[str, Any]) -> Path:
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / f"{command.replace('-', '_')}_summary.json"
    payload = {"written_at": utc_now_iso(), **stats}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n", encoding="ascii")
    return path
