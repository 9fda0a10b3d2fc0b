"""Thread pool shared by every parallel stage."""

import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Optional, TypeVar

from multipose.core.interfaces import IWorkerPool
from multipose.utils.log import get_logger

logger = get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")

_thread_state = threading.local()


def _mark_pool_thread() -> None:
    _thread_state.in_pool = True


def in_pool_thread() -> bool:
    """True when the caller is itself running on a pool worker."""
    return getattr(_thread_state, "in_pool", False)


class WorkerPool(IWorkerPool):
    """
    Fixed-size pool of worker threads.

    ``map`` always returns results in item order, so callers see the same
    output for any worker count. With one worker, or when called from a
    pool thread (a nested parallel stage), items run inline on the caller.

    numpy releases the GIL inside its kernels, which is where the work is.
    """

    def __init__(self, workers: int = 1):
        """
        Initialize pool.

        Args:
            workers: Number of worker threads (>= 1).
        """
        if workers < 1:
            raise ValueError(f"Worker count must be >= 1, got {workers}")
        self._workers = workers
        self._executor: Optional[ThreadPoolExecutor] = None
        self._lock = threading.Lock()
        self._started = False

    @property
    def workers(self) -> int:
        return self._workers

    @property
    def is_running(self) -> bool:
        return self._started

    def start(self) -> None:
        """
        Start the worker threads.

        This method is idempotent.
        """
        with self._lock:
            if self._started:
                return
            if self._workers > 1:
                self._executor = ThreadPoolExecutor(
                    max_workers=self._workers,
                    thread_name_prefix="multipose-worker",
                    initializer=_mark_pool_thread,
                )
            self._started = True
        logger.info(f"Worker pool started with {self._workers} worker(s)")

    def stop(self) -> None:
        """
        Stop the pool (blocks until running items finish).

        This method is idempotent and safe to call multiple times.
        """
        with self._lock:
            if not self._started:
                return
            self._started = False
            executor, self._executor = self._executor, None
        if executor is not None:
            executor.shutdown(wait=True, cancel_futures=True)
        logger.info("Worker pool stopped")

    def map(self, func: Callable[[T], R], items: Iterable[T]) -> list[R]:
        """
        Apply ``func`` to every item.

        Returns:
            Results in item order.

        Raises:
            RuntimeError: If the pool is not started.
            Exception: The first (in item order) exception raised by ``func``.
        """
        if not self._started:
            raise RuntimeError("Worker pool not started")
        items = list(items)
        executor = self._executor
        if executor is None or len(items) <= 1 or in_pool_thread():
            return [func(item) for item in items]
        futures = [executor.submit(func, item) for item in items]
        logger.debug(f"Dispatched {len(futures)} items to {self._workers} workers")
        return [future.result() for future in futures]

    def __enter__(self) -> "WorkerPool":
        self.start()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.stop()
