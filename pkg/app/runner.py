import asyncio
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

import structlog

from .config import WORKERS

logger = structlog.get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")


async def gather_in_executor(func: Callable[[T], R], items: Iterable[T],
                             max_workers: Optional[int] = None) -> List[R]:
    """Run a blocking `func` over `items` on a thread pool; results keep input order.

    The first exception raised by `func` propagates after all calls have finished.
    """
    items = list(items)
    if not items:
        return []
    workers = max(1, min(max_workers or WORKERS, len(items)))
    loop = asyncio.get_running_loop()
    logger.debug("fan_out", items=len(items), workers=workers, func=getattr(func, "__name__", repr(func)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [loop.run_in_executor(pool, func, item) for item in items]
        results = await asyncio.gather(*futures, return_exceptions=True)
    for result in results:
        if isinstance(result, BaseException):
            raise result
    return results


def run_concurrently(func: Callable[[T], R], items: Iterable[T],
                     max_workers: Optional[int] = None) -> List[R]:
    """Synchronous entry point; sequential when max_workers <= 1."""
    items = list(items)
    if max_workers is not None and max_workers <= 1:
        return [func(item) for item in items]
    return asyncio.run(gather_in_executor(func, items, max_workers))
