from __future__ import annotations

import asyncio
import logging
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable

logger = logging.getLogger(__name__)


@dataclass(order=True)
class CellOutcome:
    key: tuple
    result: Any = field(default=None, compare=False)
    error: str | None = field(default=None, compare=False)


async def _run_async(func: Callable[..., Any], cells: list[tuple[tuple, dict[str, Any]]], workers: int) -> list[CellOutcome]:
    semaphore = asyncio.Semaphore(workers)
    outcomes: list[CellOutcome] = []
    loop = asyncio.get_running_loop()

    with ProcessPoolExecutor(max_workers=workers) as executor:

        async def run_one(key: tuple, kwargs: dict[str, Any]) -> None:
            async with semaphore:
                outcomes.append(await _submit(loop, executor, func, key, kwargs))

        await asyncio.gather(*(run_one(key, kwargs) for key, kwargs in cells))

    return outcomes


async def _submit(loop, executor: Executor, func, key: tuple, kwargs: dict[str, Any]) -> CellOutcome:
    try:
        result = await loop.run_in_executor(executor, partial(func, **kwargs))
    except Exception as exc:
        logger.warning("cell %s failed: %s", key, exc)
        return CellOutcome(key=key, error=f"{type(exc).__name__}: {exc}"[:300])
    return CellOutcome(key=key, result=result)


def run_cells(func: Callable[..., Any], cells: list[tuple[tuple, dict[str, Any]]], workers: int = 1) -> list[CellOutcome]:
    """Evaluate func(**kwargs) for every (key, kwargs) cell; outcomes come back sorted by key.

    func must be a module-level function when workers > 1. A failing cell is
    recorded on its outcome and does not stop the others.
    """
    if workers <= 1:
        outcomes = []
        for key, kwargs in cells:
            try:
                outcomes.append(CellOutcome(key=key, result=func(**kwargs)))
            except Exception as exc:
                logger.warning("cell %s failed: %s", key, exc)
                outcomes.append(CellOutcome(key=key, error=f"{type(exc).__name__}: {exc}"[:300]))
    else:
        outcomes = asyncio.run(_run_async(func, cells, workers))
    outcomes.sort()
    return outcomes
