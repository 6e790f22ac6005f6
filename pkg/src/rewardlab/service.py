"""HTTP annotation service for side-by-side judgments.

Endpoints (JSON payloads):
  GET  /api/assignment?rater=<id>  next assignment for that rater, 204 when done
  POST /api/response               store one judgment; 409 on duplicates
  GET  /api/progress               assignment counts
  GET  /api/report                 current SxSReport
  GET  /                           static assets (the annotator UI build)

Raters bind first-come-first-served to plan slots and work through that
slot's assignments in plan order.  Every accepted response is appended to
the log file and fsynced before the request is acknowledged, so responses
are never silently dropped; duplicates return 409 and leave the store
unchanged.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from rewardlab.errors import ValidationError
from rewardlab.sxs import (
    LOG_FORMAT,
    FORMAT_VERSION,
    MODEL_A,
    AnnotationPlan,
    Assignment,
    DuplicateResponseError,
    SxSRecord,
    UnknownAssignmentError,
    ingest_sxs,
    report_to_json_bytes,
    task_question,
)
from rewardlab.util import dump_json_line

logger = logging.getLogger(__name__)

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".ico": "image/x-icon",
}

_PLACEHOLDER_PAGE = (
    "<!doctype html><title>rewardlab annotation service</title>"
    "<p>No UI bundle configured. The JSON API lives under /api/.</p>"
)


class AnnotationStore:
    """Plan state, rater-slot bindings, and the durable response log."""

    def __init__(self, plan: AnnotationPlan, log_path: str | Path):
        if not plan.assignments:
            raise ValidationError("annotation plan has no assignments")
        self.plan = plan
        self.pairs = plan.pairs_by_id()
        missing = [a.pair_id for a in plan.assignments if a.pair_id not in self.pairs]
        if missing:
            raise ValidationError(f"plan assignment references unknown pair {missing[0]!r}")
        self._lock = threading.Lock()
        self._slots = {
            slot: plan.assignments_for_slot(slot) for slot in range(plan.raters_per_pair)
        }
        self._rater_slot: dict[str, int] = {}
        self._done: set[tuple[str, str, str]] = set()
        self._records: list[SxSRecord] = []
        self._log_path = Path(log_path)
        fresh = not self._log_path.exists() or self._log_path.stat().st_size == 0
        self._log = open(self._log_path, "a", encoding="utf-8")
        if fresh:
            self._append({"format": LOG_FORMAT, "version": FORMAT_VERSION})

    def _append(self, obj: dict) -> None:
        self._log.write(dump_json_line(obj) + "\n")
        self._log.flush()
        os.fsync(self._log.fileno())

    def close(self) -> None:
        self._log.close()

    def _bind(self, rater_id: str) -> int | None:
        # Caller holds the lock.
        if rater_id in self._rater_slot:
            return self._rater_slot[rater_id]
        taken = set(self._rater_slot.values())
        for slot in range(self.plan.raters_per_pair):
            if slot not in taken:
                self._rater_slot[rater_id] = slot
                return slot
        return None

    def next_assignment(self, rater_id: str) -> Assignment | None:
        with self._lock:
            slot = self._bind(rater_id)
            if slot is None:
                return None
            for assignment in self._slots[slot]:
                if (assignment.pair_id, assignment.task, rater_id) not in self._done:
                    return assignment
            return None

    def submit(self, payload: dict) -> SxSRecord:
        try:
            pair_id = str(payload["pair_id"])
            task = str(payload["task"])
            rater_id = str(payload["rater_id"])
            choice = str(payload["choice"])
            response_ms = int(payload["response_ms"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad response payload: {exc!r}") from exc
        with self._lock:
            slot = self._bind(rater_id)
            if slot is None:
                raise UnknownAssignmentError(f"no slot available for rater {rater_id!r}")
            assignment = next(
                (
                    a
                    for a in self._slots[slot]
                    if a.pair_id == pair_id and a.task == task
                ),
                None,
            )
            if assignment is None:
                raise UnknownAssignmentError(
                    f"no assignment for pair {pair_id!r}, task {task!r} in this rater's slot"
                )
            key = (pair_id, task, rater_id)
            if key in self._done:
                raise DuplicateResponseError(
                    f"response already stored for pair {pair_id!r}, task {task!r}"
                )
            record = SxSRecord(
                pair_id=pair_id,
                task=task,
                rater_id=rater_id,
                choice=choice,
                left_model=assignment.left_model,
                response_ms=response_ms,
                timestamp=datetime.now(timezone.utc).isoformat(),
            )
            record.validate()
            self._append(
                {
                    "pair_id": record.pair_id,
                    "task": record.task,
                    "rater_id": record.rater_id,
                    "choice": record.choice,
                    "left_model": record.left_model,
                    "response_ms": record.response_ms,
                    "timestamp": record.timestamp,
                }
            )
            self._done.add(key)
            self._records.append(record)
            return record

    def progress(self) -> dict:
        with self._lock:
            by_task: dict[str, int] = {task: 0 for task in self.plan.tasks}
            for record in self._records:
                by_task[record.task] += 1
            return {
                "total": len(self.plan.assignments),
                "completed": len(self._records),
                "by_task": by_task,
                "raters": sorted(self._rater_slot),
            }

    def report_bytes(self) -> bytes:
        with self._lock:
            records = list(self._records)
        return report_to_json_bytes(ingest_sxs(records, self.plan))


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    # Quieter than the default stderr-per-request logging.
    def log_message(self, fmt, *args):
        logger.debug("%s %s", self.address_string(), fmt % args)

    @property
    def store(self) -> AnnotationStore:
        return self.server.store

    def _send_json(self, status: int, obj: dict) -> None:
        body = (json.dumps(obj) + "\n").encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        url = urlparse(self.path)
        if url.path == "/api/assignment":
            rater = parse_qs(url.query).get("rater", [""])[0]
            if not rater:
                self._send_json(400, {"error": "missing rater parameter"})
                return
            assignment = self.store.next_assignment(rater)
            if assignment is None:
                self.send_response(204)
                self.send_header("Content-Length", "0")
                self.end_headers()
                return
            pair = self.store.pairs[assignment.pair_id]
            left_is_a = assignment.left_model == MODEL_A
            self._send_json(
                200,
                {
                    "pair_id": assignment.pair_id,
                    "task": assignment.task,
                    "question": task_question(assignment.task),
                    "left_image_ref": pair.item_a_ref if left_is_a else pair.item_b_ref,
                    "right_image_ref": pair.item_b_ref if left_is_a else pair.item_a_ref,
                    "prompt_text": pair.prompt_text,
                },
            )
            return
        if url.path == "/api/progress":
            self._send_json(200, self.store.progress())
            return
        if url.path == "/api/report":
            self._send_bytes(200, self.store.report_bytes(), "application/json")
            return
        self._serve_static(url.path)

    def do_POST(self):
        url = urlparse(self.path)
        if url.path != "/api/response":
            self._send_json(404, {"error": "unknown endpoint"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            self._send_json(400, {"error": "body must be JSON"})
            return
        try:
            record = self.store.submit(payload)
        except DuplicateResponseError as exc:
            self._send_json(409, {"error": str(exc)})
            return
        except (UnknownAssignmentError, ValidationError) as exc:
            self._send_json(400, {"error": str(exc)})
            return
        self._send_json(200, {"status": "stored", "pair_id": record.pair_id, "task": record.task})

    def _serve_static(self, path: str) -> None:
        static_dir = self.server.static_dir
        if static_dir is None:
            if path in ("/", "/index.html"):
                self._send_bytes(200, _PLACEHOLDER_PAGE.encode("utf-8"), _CONTENT_TYPES[".html"])
            else:
                self._send_json(404, {"error": "not found"})
            return
        rel = path.lstrip("/") or "index.html"
        target = (static_dir / rel).resolve()
        if not str(target).startswith(str(static_dir.resolve())) or not target.is_file():
            self._send_json(404, {"error": "not found"})
            return
        content_type = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        self._send_bytes(200, target.read_bytes(), content_type)


class AnnotationServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, bind, store: AnnotationStore, static_dir=None):
        self.store = store
        self.static_dir = Path(static_dir) if static_dir else None
        super().__init__(bind, _Handler)


def serve_annotation(
    plan: AnnotationPlan,
    bind: tuple[str, int],
    log_path: str | Path,
    static_dir: str | Path | None = None,
) -> AnnotationServer:
    """Create the server (call .serve_forever() to run it)."""
    store = AnnotationStore(plan, log_path)
    return AnnotationServer(bind, store, static_dir=static_dir)
