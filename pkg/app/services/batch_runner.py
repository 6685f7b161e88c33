"""
Ordered fan-out over frames.

Workers compute; the parent collects results in input order and does all file
writes, so output bytes never depend on scheduling.
"""

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterator, Optional, Sequence, TypeVar

from tqdm import tqdm

from app.core.logging import get_logger

logger = get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def run_ordered(
    func: Callable[[T], R],
    items: Sequence[T],
    jobs: int = 1,
    desc: Optional[str] = None,
    progress: bool = True,
) -> Iterator[R]:
    """
    Apply ``func`` to every item, yielding results in input order.

    ``func`` must be a module-level callable when ``jobs > 1``.
    """
    total = len(items)
    bar = tqdm(total=total, desc=desc, disable=not progress or total == 0, leave=False)
    try:
        if jobs <= 1 or total <= 1:
            for item in items:
                yield func(item)
                bar.update(1)
            return

        chunksize = max(1, total // (jobs * 8))
        logger.debug("Starting worker pool", jobs=jobs, items=total, chunksize=chunksize)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for result in pool.map(func, items, chunksize=chunksize):
                yield result
                bar.update(1)
    finally:
        bar.close()
