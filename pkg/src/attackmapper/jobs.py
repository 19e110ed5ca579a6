"""Background job execution for long-running gateway work.

One worker thread drains a FIFO queue, so jobs of every kind are
serialized: at most one training run (or anything else) executes at a
time, keeping outputs deterministic. Records move queued -> running ->
done | failed; terminal records never change again.
"""

from __future__ import annotations

import queue
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Callable

from .errors import AttackMapperError, NotFoundError

JOB_KINDS = ("train", "filter", "mine", "evaluate")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class JobRecord:
    id: str
    kind: str
    status: str  # queued | running | done | failed
    artifacts: tuple[str, ...] = ()
    error: dict | None = None
    created_at: str = field(default_factory=_now)
    started_at: str | None = None
    finished_at: str | None = None

    def as_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "status": self.status,
            "artifacts": list(self.artifacts),
            "error": self.error,
            "created_at": self.created_at,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }


class JobQueue:
    """Single-worker queue mapping job ids to records.

    The work callable returns a list of artifact paths on success.
    Typed errors fail the job with their code; unexpected exceptions
    fail it with code "internal".
    """

    def __init__(self) -> None:
        self._records: dict[str, JobRecord] = {}
        self._lock = threading.Lock()
        self._queue: "queue.Queue[tuple[str, Callable[[], list[str]]]]" = queue.Queue()
        self._worker = threading.Thread(target=self._run, daemon=True)
        self._worker.start()

    def submit(self, kind: str, work: Callable[[], list[str]]) -> JobRecord:
        if kind not in JOB_KINDS:
            raise NotFoundError(f"unknown job kind {kind!r}")
        record = JobRecord(id=uuid.uuid4().hex, kind=kind, status="queued")
        with self._lock:
            self._records[record.id] = record
        self._queue.put((record.id, work))
        return record

    def get(self, job_id: str) -> JobRecord:
        with self._lock:
            if job_id not in self._records:
                raise NotFoundError(f"unknown job {job_id!r}")
            return self._records[job_id]

    def wait(self, job_id: str, timeout: float = 60.0) -> JobRecord:
        """Poll until the job reaches a terminal state."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            record = self.get(job_id)
            if record.status in ("done", "failed"):
                return record
            time.sleep(0.01)
        return self.get(job_id)

    def _update(self, job_id: str, **changes) -> None:
        with self._lock:
            current = self._records[job_id]
            if current.status in ("done", "failed"):
                return
            self._records[job_id] = replace(current, **changes)

    def _run(self) -> None:
        while True:
            job_id, work = self._queue.get()
            self._update(job_id, status="running", started_at=_now())
            try:
                artifacts = work()
            except AttackMapperError as exc:
                self._update(
                    job_id,
                    status="failed",
                    error={"code": exc.code, "message": exc.message},
                    finished_at=_now(),
                )
            except Exception as exc:  # pragma: no cover - defensive
                self._update(
                    job_id,
                    status="failed",
                    error={"code": "internal", "message": str(exc)},
                    finished_at=_now(),
                )
            else:
                self._update(
                    job_id,
                    status="done",
                    artifacts=tuple(artifacts),
                    finished_at=_now(),
                )
            finally:
                self._queue.task_done()
