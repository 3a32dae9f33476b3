"""Generation job queue: bounded FIFO over a worker pool, monotone status
transitions, idempotent submission by key."""

from __future__ import annotations

import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable


@dataclass
class Job:
    job_id: str
    status: str = "queued"  # queued -> running -> done | failed
    result: Any = None
    error: str = ""

    def transition(self, new: str) -> None:
        order = {"queued": 0, "running": 1, "done": 2, "failed": 2}
        if order[new] < order[self.status]:
            raise RuntimeError(f"illegal status transition {self.status} -> {new}")
        self.status = new


class JobQueue:
    def __init__(self, workers: int = 2, depth: int = 32):
        self._pool = ThreadPoolExecutor(max_workers=workers)
        self._depth = depth
        self._lock = threading.Lock()
        self._jobs: dict[str, Job] = {}
        self._by_key: dict[str, str] = {}
        self._pending = 0

    def submit(self, work: Callable[[], Any], idempotency_key: str | None = None) -> Job:
        with self._lock:
            if idempotency_key is not None and idempotency_key in self._by_key:
                return self._jobs[self._by_key[idempotency_key]]
            if self._pending >= self._depth:
                raise OverflowError(f"job queue full (depth {self._depth})")
            job = Job(job_id=uuid.uuid4().hex[:12])
            self._jobs[job.job_id] = job
            if idempotency_key is not None:
                self._by_key[idempotency_key] = job.job_id
            self._pending += 1

        def runner():
            with self._lock:
                job.transition("running")
            try:
                result = work()
            except Exception as exc:  # job failures are reported, not raised
                with self._lock:
                    job.error = str(exc)
                    job.transition("failed")
                    self._pending -= 1
                return
            with self._lock:
                job.result = result
                job.transition("done")
                self._pending -= 1

        self._pool.submit(runner)
        return job

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def shutdown(self) -> None:
        self._pool.shutdown(wait=True)
