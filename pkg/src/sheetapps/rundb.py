"""Embedded persistence for runs, the audit trail, and submission rows.

One sqlite file holds everything, so a deployment is the service plus a
data directory. Writes are serialized through a single lock; sqlite's WAL
mode keeps concurrent reads cheap. The audit table is append-only by
construction: nothing in this module updates or deletes from it.
"""
from __future__ import annotations

import json
import sqlite3
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .aggregation import StoredSubmission
from .executor import SubmissionRowData

QUEUED = "QUEUED"
RUNNING = "RUNNING"
COMPLETED = "COMPLETED"
FAILED = "FAILED"

_SCHEMA = """
CREATE TABLE IF NOT EXISTS runs (
  run_id TEXT PRIMARY KEY,
  seq INTEGER NOT NULL,
  user_id TEXT NOT NULL,
  app TEXT NOT NULL,
  revision INTEGER NOT NULL,
  period TEXT NOT NULL,
  status TEXT NOT NULL,
  inputs_json TEXT NOT NULL,
  outputs_json TEXT,
  flags_json TEXT,
  failure TEXT,
  enqueued_at TEXT NOT NULL,
  started_at TEXT,
  finished_at TEXT
);
CREATE UNIQUE INDEX IF NOT EXISTS runs_seq ON runs(seq);
CREATE TABLE IF NOT EXISTS seq_counter (
  id INTEGER PRIMARY KEY CHECK (id = 1),
  next INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS audit (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  at TEXT NOT NULL,
  user_id TEXT NOT NULL,
  action TEXT NOT NULL,
  app TEXT NOT NULL,
  revision INTEGER,
  run_id TEXT,
  input_digest TEXT
);
CREATE TABLE IF NOT EXISTS submissions (
  app TEXT NOT NULL,
  revision INTEGER NOT NULL,
  run_id TEXT NOT NULL,
  seq INTEGER NOT NULL,
  user_id TEXT NOT NULL,
  period TEXT NOT NULL,
  key_json TEXT NOT NULL,
  measures_json TEXT NOT NULL,
  PRIMARY KEY (run_id, key_json)
);
CREATE INDEX IF NOT EXISTS submissions_scope ON submissions(app, period);
"""


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    seq: int
    user_id: str
    app: str
    revision: int
    period: str
    status: str
    inputs_json: str
    outputs_json: str | None
    flags_json: str | None
    failure: str | None
    enqueued_at: str
    started_at: str | None
    finished_at: str | None

    @property
    def flags(self) -> list[str]:
        return json.loads(self.flags_json) if self.flags_json else []


@dataclass(frozen=True)
class AuditRecord:
    id: int
    at: str
    user_id: str
    action: str
    app: str
    revision: int | None
    run_id: str | None
    input_digest: str | None

    def as_dict(self) -> dict:
        return {
            "at": self.at,
            "user": self.user_id,
            "action": self.action,
            "app": self.app,
            "revision": self.revision,
            "run_id": self.run_id,
            "input_digest": self.input_digest,
        }


class RunDB:
    """Thread-safe handle over the run database file."""

    def __init__(self, path: str | Path):
        self._conn = sqlite3.connect(str(path), check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._lock = threading.Lock()
        with self._lock:
            self._conn.execute("PRAGMA journal_mode=WAL")
            self._conn.executescript(_SCHEMA)
            self._conn.execute(
                "INSERT OR IGNORE INTO seq_counter (id, next) VALUES (1, 1)"
            )
            self._conn.commit()

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # -- runs ----------------------------------------------------------

    def create_run(
        self,
        run_id: str,
        user_id: str,
        app: str,
        revision: int,
        period: str,
        inputs_json: str,
    ) -> int:
        """Persist a QUEUED run; returns its creation sequence number."""
        with self._lock:
            cur = self._conn.execute(
                "UPDATE seq_counter SET next = next + 1 WHERE id = 1 RETURNING next - 1"
            )
            seq = cur.fetchone()[0]
            self._conn.execute(
                "INSERT INTO runs (run_id, seq, user_id, app, revision, period,"
                " status, inputs_json, enqueued_at)"
                " VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (run_id, seq, user_id, app, revision, period, QUEUED, inputs_json, _now()),
            )
            self._conn.commit()
            return seq

    def claim_run(self, run_id: str) -> bool:
        """QUEUED -> RUNNING; False when another worker already has it."""
        with self._lock:
            cur = self._conn.execute(
                "UPDATE runs SET status = ?, started_at = ? WHERE run_id = ? AND status = ?",
                (RUNNING, _now(), run_id, QUEUED),
            )
            self._conn.commit()
            return cur.rowcount == 1

    def complete_run(self, run_id: str, outputs_json: str, flags: list[str]) -> None:
        with self._lock:
            self._conn.execute(
                "UPDATE runs SET status = ?, outputs_json = ?, flags_json = ?,"
                " finished_at = ? WHERE run_id = ? AND status = ?",
                (COMPLETED, outputs_json, json.dumps(flags), _now(), run_id, RUNNING),
            )
            self._conn.commit()

    def fail_run(self, run_id: str, reason: str) -> None:
        with self._lock:
            self._conn.execute(
                "UPDATE runs SET status = ?, failure = ?, finished_at = ?"
                " WHERE run_id = ? AND status IN (?, ?)",
                (FAILED, reason, _now(), run_id, QUEUED, RUNNING),
            )
            self._conn.commit()

    def get_run(self, run_id: str) -> RunRecord | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM runs WHERE run_id = ?", (run_id,)
            ).fetchone()
        return RunRecord(**dict(row)) if row else None

    def queued_runs(self) -> list[RunRecord]:
        """QUEUED runs in FIFO order, for requeueing after a restart."""
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM runs WHERE status = ? ORDER BY seq", (QUEUED,)
            ).fetchall()
        return [RunRecord(**dict(r)) for r in rows]

    # -- audit ---------------------------------------------------------

    def add_audit(
        self,
        user_id: str,
        action: str,
        app: str,
        revision: int | None = None,
        run_id: str | None = None,
        input_digest: str | None = None,
    ) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT INTO audit (at, user_id, action, app, revision, run_id, input_digest)"
                " VALUES (?, ?, ?, ?, ?, ?, ?)",
                (_now(), user_id, action, app, revision, run_id, input_digest),
            )
            self._conn.commit()

    def audit_query(
        self,
        user: str | None = None,
        app: str | None = None,
        since: str | None = None,
        until: str | None = None,
    ) -> list[AuditRecord]:
        clauses, args = [], []
        if user is not None:
            clauses.append("user_id = ?")
            args.append(user)
        if app is not None:
            clauses.append("app = ?")
            args.append(app)
        if since is not None:
            clauses.append("at >= ?")
            args.append(since)
        if until is not None:
            clauses.append("at <= ?")
            args.append(until)
        where = f" WHERE {' AND '.join(clauses)}" if clauses else ""
        with self._lock:
            rows = self._conn.execute(
                f"SELECT * FROM audit{where} ORDER BY id", args
            ).fetchall()
        return [AuditRecord(**dict(r)) for r in rows]

    # -- submissions ---------------------------------------------------

    def replace_submissions(
        self,
        app: str,
        revision: int,
        run_id: str,
        seq: int,
        user_id: str,
        period: str,
        rows: list[SubmissionRowData],
    ) -> None:
        """Idempotent per run id: re-recording replaces, never duplicates."""
        with self._lock:
            self._conn.execute("DELETE FROM submissions WHERE run_id = ?", (run_id,))
            self._conn.executemany(
                "INSERT INTO submissions (app, revision, run_id, seq, user_id,"
                " period, key_json, measures_json) VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                [
                    (
                        app,
                        revision,
                        run_id,
                        seq,
                        user_id,
                        period,
                        json.dumps(list(row.key), ensure_ascii=False),
                        json.dumps(row.measures, sort_keys=True),
                    )
                    for row in rows
                ],
            )
            self._conn.commit()

    def submissions_for(self, app: str, period: str) -> list[StoredSubmission]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT user_id, seq, key_json, measures_json FROM submissions"
                " WHERE app = ? AND period = ? ORDER BY seq",
                (app, period),
            ).fetchall()
        return [
            StoredSubmission(
                user_id=r["user_id"],
                seq=r["seq"],
                key=tuple(json.loads(r["key_json"])),
                measures=json.loads(r["measures_json"]),
            )
            for r in rows
        ]

    def submission_count(self, run_id: str) -> int:
        with self._lock:
            row = self._conn.execute(
                "SELECT COUNT(*) FROM submissions WHERE run_id = ?", (run_id,)
            ).fetchone()
        return row[0]
