import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar

from histoad.config import DEFAULT_WORKERS

T = TypeVar("T")
R = TypeVar("R")


class BatchProcessor:
    """Order-preserving thread pool for chunked, read-only work (encoding, kernel rows, rendering)"""

    def __init__(self, workers: int = DEFAULT_WORKERS):
        self.workers = max(1, int(workers))
        self.processed: Dict[str, int] = {}

    def configure(self, workers: int) -> None:
        self.workers = max(1, int(workers))
        logging.debug(f"Batch processor using {self.workers} worker(s)")

    @staticmethod
    def chunks(items: Sequence[T], chunk_size: int) -> List[Sequence[T]]:
        return [items[i:i + chunk_size] for i in range(0, len(items), chunk_size)]

    def map(
        self, fn: Callable[[T], R], items: Sequence[T], task_name: str = "batch", workers: Optional[int] = None
    ) -> List[R]:
        """Apply fn to every item; results come back in input order regardless of worker count"""
        workers = self.workers if workers is None else max(1, int(workers))
        if workers == 1 or len(items) <= 1:
            results = [fn(item) for item in items]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(fn, items))
        self.processed[task_name] = self.processed.get(task_name, 0) + len(items)
        return results

    def map_chunks(
        self,
        fn: Callable[[Sequence[T]], R],
        items: Sequence[T],
        chunk_size: int,
        task_name: str = "batch",
        workers: Optional[int] = None,
    ) -> List[R]:
        return self.map(fn, self.chunks(items, chunk_size), task_name, workers)

    def get_batch_status(self) -> Dict[str, Any]:
        return {"workers": self.workers, "processed": dict(self.processed)}


# Global batch processor instance
batch_processor = BatchProcessor()
