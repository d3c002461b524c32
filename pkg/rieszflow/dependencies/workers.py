import logging
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from typing import Callable, Iterable, Optional, TypeVar

from rieszflow.config import get_settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class WorkerPool:
    """Менеджер пулу виконавців з обмеженням RIESZFLOW_THREADS"""

    def __init__(self, processes: bool = False):
        self.processes = processes
        self.executor: Optional[Executor] = None
        self.workers = 1

    def init_pool(self, workers: Optional[int] = None) -> Executor:
        """Створює пул (тільки один екземпляр)"""
        if self.executor is None:
            self.workers = workers or get_settings().THREADS
            kind = ProcessPoolExecutor if self.processes else ThreadPoolExecutor
            self.executor = kind(max_workers=self.workers)
            logger.info(f"🧵 Пул на {self.workers} виконавців ({kind.__name__})")
        return self.executor

    def close_pool(self) -> None:
        """Закриває пул перед виходом"""
        if self.executor is not None:
            self.executor.shutdown(wait=True)
            self.executor = None


def pool_map(
    fn: Callable[[T], R],
    items: Iterable[T],
    workers: Optional[int] = None,
    processes: bool = False,
) -> list[R]:
    """map зі збереженням порядку; при одному виконавці без пулу"""
    items = list(items)
    workers = workers or get_settings().THREADS
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    pool = WorkerPool(processes=processes)
    executor = pool.init_pool(min(workers, len(items)))
    try:
        return list(executor.map(fn, items))
    finally:
        pool.close_pool()
