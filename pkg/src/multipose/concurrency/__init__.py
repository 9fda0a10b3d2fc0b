"""Concurrency utilities."""

from multipose.concurrency.worker import WorkerPool, in_pool_thread

__all__ = ["WorkerPool", "in_pool_thread"]
