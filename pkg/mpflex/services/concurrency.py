# mpflex/services/concurrency.py
import asyncio
from typing import Callable, Iterable, TypeVar

from mpflex.core.config import settings

T = TypeVar("T")
R = TypeVar("R")


async def _gather(fn: Callable[[T], R], items: list[T], limit: int) -> list[R]:
    semaphore = asyncio.Semaphore(limit)

    async def run(item: T) -> R:
        async with semaphore:
            return await asyncio.to_thread(fn, item)

    return await asyncio.gather(*[run(item) for item in items])


def map_concurrently(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Apply ``fn`` to every item on worker threads; results keep the input order."""
    items = list(items)
    if settings.WORKERS <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    return asyncio.run(_gather(fn, items, settings.WORKERS))
