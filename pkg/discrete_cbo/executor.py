"""
Replica executor with parallel execution support.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

from .errors import ParameterError

logger = logging.getLogger(__name__)

T = TypeVar("T")

WORKERS_ENV = "DISCRETE_CBO_WORKERS"


def default_workers() -> int:
    """Worker count from DISCRETE_CBO_WORKERS, else 1."""
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return 1
    try:
        workers = int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer {WORKERS_ENV}={raw!r}")
        return 1
    return max(1, workers)


class ReplicaExecutor:
    """
    Runs one callable per replica index.

    Results always come back in replica order, so reductions over them are
    independent of the worker count.
    """

    def __init__(self, max_workers: Optional[int] = None):
        workers = default_workers() if max_workers is None else max_workers
        if workers < 1:
            raise ParameterError(f"max_workers must be >= 1, got {workers}")
        self.max_workers = workers

    def map(self, func: Callable[[int], T], replicas: Sequence[int]) -> List[T]:
        """
        Execute func for every replica index.

        Args:
            func: Callable taking a replica index
            replicas: Replica indices

        Returns:
            List of results in the same order as replicas
        """
        indices = list(replicas)
        if self.max_workers == 1 or len(indices) <= 1:
            return [func(i) for i in indices]

        logger.debug(f"Running {len(indices)} replicas on {self.max_workers} threads")
        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            return list(pool.map(func, indices))
