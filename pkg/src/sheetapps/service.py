"""The HTTP service: publishes apps, accepts and queues runs, executes
them on a worker pool, and serves results, reports, aggregates, and the
audit trail.

All state lives in a data directory (publication store + run database);
request handling is concurrent, run execution happens on a FIFO worker
pool, and every run is pinned to the revision that was head when it was
created. Tokens map to principals with one of three roles; each role
includes the ones below it: consumer < author < admin.
"""
from __future__ import annotations

import json
import queue
import secrets
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Depends, FastAPI, Request
from fastapi.responses import HTMLResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from fastapi import HTTPException, Query

from .aggregation import AggregateTable, aggregate_rows, inject_aggregate
from .appdef import EasapDefinition, validate_inputs
from .executor import (
    build_edits,
    decode_output,
    decode_typed_inputs,
    encode_output,
    encode_typed_inputs,
    execute_pipeline,
    input_digest,
)
from .formula import DependencyGraph, RecalcTimeout, build_graph
from .report import render_report
from .rundb import COMPLETED, RunDB, RunRecord
from .store import NotFoundError, PublicationStore, PublishRejected
from .workbook import Workbook

ROLES = ("consumer", "author", "admin")
_ROLE_RANK = {role: i for i, role in enumerate(ROLES)}


@dataclass(frozen=True)
class Principal:
    user_id: str
    role: str

    def at_least(self, role: str) -> bool:
        return _ROLE_RANK[self.role] >= _ROLE_RANK[role]


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8600
    workers: int = 4
    queue_bound: int = 1000
    data_dir: str = "data"
    run_timeout: float = 30.0
    static_dir: str | None = None
    tokens: dict[str, Principal] = field(default_factory=dict)


def load_config(path: str | Path) -> ServiceConfig:
    """Read the service config file (JSON); unset keys take defaults."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    listen = doc.get("listen", {})
    tokens = {}
    for token, entry in doc.get("tokens", {}).items():
        role = entry.get("role", "consumer")
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r} for token entry {entry.get('user')!r}")
        tokens[token] = Principal(user_id=entry["user"], role=role)
    return ServiceConfig(
        host=listen.get("host", "127.0.0.1"),
        port=int(listen.get("port", 8600)),
        workers=int(doc.get("workers", 4)),
        queue_bound=int(doc.get("queue_bound", 1000)),
        data_dir=doc.get("data_dir", "data"),
        run_timeout=float(doc.get("run_timeout_seconds", 30.0)),
        static_dir=doc.get("static_dir"),
        tokens=tokens,
    )


@dataclass
class RevisionBundle:
    """Parsed, graph-built revision shared read-only across runs."""

    defn: EasapDefinition
    workbooks: dict[str, Workbook]
    graphs: dict[str, DependencyGraph]


class ServiceState:
    def __init__(self, config: ServiceConfig):
        self.config = config
        data_dir = Path(config.data_dir)
        data_dir.mkdir(parents=True, exist_ok=True)
        self.store = PublicationStore(data_dir / "store")
        self.db = RunDB(data_dir / "runs.db")
        self.queue: queue.Queue = queue.Queue()
        self.slots = threading.Semaphore(config.queue_bound)
        self.workers: list[threading.Thread] = []
        self._bundles: dict[tuple[str, int], RevisionBundle] = {}
        self._bundles_lock = threading.Lock()

    def bundle(self, app: str, revision: int) -> RevisionBundle:
        """Load-once cache; revisions are immutable so entries never stale."""
        key = (app, revision)
        with self._bundles_lock:
            cached = self._bundles.get(key)
        if cached is not None:
            return cached
        rev = self.store.get(app, revision)
        defn = rev.definition()
        workbooks = rev.workbooks()
        graphs = {wid: build_graph(wb) for wid, wb in workbooks.items()}
        made = RevisionBundle(defn=defn, workbooks=workbooks, graphs=graphs)
        with self._bundles_lock:
            if len(self._bundles) >= 64:
                self._bundles.pop(next(iter(self._bundles)))
            self._bundles.setdefault(key, made)
            return self._bundles[key]

    def start_workers(self) -> None:
        for rec in self.db.queued_runs():  # carry over a backlog across restarts
            self.queue.put((rec.run_id, False))
        for i in range(self.config.workers):
            t = threading.Thread(target=self._worker_loop, name=f"run-worker-{i}", daemon=True)
            t.start()
            self.workers.append(t)

    def stop_workers(self) -> None:
        for _ in self.workers:
            self.queue.put(None)
        for t in self.workers:
            t.join(timeout=10)
        self.workers.clear()

    def _worker_loop(self) -> None:
        while True:
            item = self.queue.get()
            if item is None:
                return
            run_id, holds_slot = item
            if holds_slot:
                self.slots.release()
            if not self.db.claim_run(run_id):
                continue  # another worker (or a restart race) already took it
            self._execute(run_id)

    def _execute(self, run_id: str) -> None:
        rec = self.db.get_run(run_id)
        if rec is None:
            return
        try:
            bundle = self.bundle(rec.app, rec.revision)
            typed = decode_typed_inputs(rec.inputs_json)
            edits = build_edits(bundle.defn, typed)
            deadline = time.monotonic() + self.config.run_timeout
            outcome = execute_pipeline(
                bundle.defn, bundle.workbooks, edits, graphs=bundle.graphs, deadline=deadline
            )
            outputs_json = json.dumps(
                {oid: encode_output(v) for oid, v in outcome.outputs.items()},
                sort_keys=True,
                separators=(",", ":"),
                ensure_ascii=False,
            )
            if bundle.defn.submission is not None:
                self.db.replace_submissions(
                    rec.app, rec.revision, run_id, rec.seq, rec.user_id, rec.period, outcome.rows
                )
            self.db.complete_run(run_id, outputs_json, outcome.flags)
            self.db.add_audit(
                rec.user_id, "run-completed", rec.app, revision=rec.revision, run_id=run_id
            )
        except RecalcTimeout:
            self.db.fail_run(run_id, f"timeout after {self.config.run_timeout}s")
            self.db.add_audit(
                rec.user_id, "run-failed", rec.app, revision=rec.revision, run_id=run_id
            )
        except Exception as exc:  # platform fault: report, never crash the worker
            self.db.fail_run(run_id, f"{type(exc).__name__}: {exc}")
            self.db.add_audit(
                rec.user_id, "run-failed", rec.app, revision=rec.revision, run_id=run_id
            )


def _state(request: Request) -> ServiceState:
    return request.app.state.svc


def _principal(request: Request) -> Principal:
    token = request.headers.get("X-Auth-Token")
    if not token:
        raise HTTPException(status_code=401, detail="authentication required")
    principal = _state(request).config.tokens.get(token)
    if principal is None:
        raise HTTPException(status_code=401, detail="unknown token")
    return principal


def _require(principal: Principal, role: str) -> None:
    if not principal.at_least(role):
        raise HTTPException(status_code=403, detail=f"requires the {role} role")


def _issues_response(exc: PublishRejected) -> JSONResponse:
    return JSONResponse(
        status_code=422,
        content={"issues": [{"path": i.path, "message": i.message} for i in exc.issues]},
    )


def _not_found(detail: str = "not found") -> HTTPException:
    return HTTPException(status_code=404, detail=detail)


def _run_view(rec: RunRecord) -> dict:
    view = {
        "run_id": rec.run_id,
        "status": rec.status,
        "app": rec.app,
        "revision": rec.revision,
        "period": rec.period,
        "enqueued_at": rec.enqueued_at,
        "started_at": rec.started_at,
        "finished_at": rec.finished_at,
    }
    if rec.status == COMPLETED:
        view["outputs"] = json.loads(rec.outputs_json)
        view["flags"] = rec.flags
        view["report_url"] = f"/api/reports/{rec.run_id}"
    if rec.failure is not None:
        view["failure"] = rec.failure
    return view


def _aggregate_for(
    state: ServiceState, app: str, period: str, keys, measures
) -> tuple[RevisionBundle, AggregateTable]:
    try:
        head = state.store.head(app)
    except NotFoundError:
        raise _not_found(f"unknown app {app!r}")
    bundle = state.bundle(app, head)
    schema = bundle.defn.submission
    if schema is None:
        raise HTTPException(status_code=422, detail="app declares no submission schema")
    rows = state.db.submissions_for(app, period)
    try:
        table = aggregate_rows(
            app,
            period,
            schema.keys,
            rows,
            keys=keys,
            measures=measures,
            schema_measures=schema.measures,
        )
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return bundle, table


def create_app(config: ServiceConfig) -> FastAPI:
    state = ServiceState(config)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        state.start_workers()
        try:
            yield
        finally:
            state.stop_workers()
            state.db.close()

    app = FastAPI(title="workbook app service", lifespan=lifespan)
    app.state.svc = state

    @app.get("/api/apps")
    def list_apps(principal: Principal = Depends(_principal)):
        return state.store.catalog()

    @app.get("/api/apps/{name}")
    def get_app(
        name: str,
        rev: int | None = None,
        principal: Principal = Depends(_principal),
    ):
        try:
            revision = state.store.get(name, rev)
        except NotFoundError as exc:
            raise _not_found(str(exc))
        doc = json.loads(revision.definition_text)
        if not principal.at_least("author"):
            # consumers see the form, never the cell wiring
            doc.pop("bindings", None)
            doc.pop("submission", None)
            doc.pop("workbooks", None)
        return {
            "name": revision.app,
            "label": doc.get("label", revision.app),
            "revision": revision.revision,
            "origin": revision.origin_label,
            "definition": doc,
        }

    @app.post("/api/apps", status_code=201)
    def publish_app(body: dict, principal: Principal = Depends(_principal)):
        _require(principal, "author")
        definition = body.get("definition")
        workbooks = body.get("workbooks")
        if not isinstance(definition, str) or not isinstance(workbooks, dict):
            raise HTTPException(
                status_code=422,
                detail="body must carry definition text and a workbooks map",
            )
        bad = [k for k, v in workbooks.items() if not isinstance(v, str)]
        if bad:
            raise HTTPException(
                status_code=422, detail=f"workbook content must be text: {', '.join(sorted(bad))}"
            )
        try:
            rev = state.store.publish(definition, workbooks, principal.user_id)
        except PublishRejected as exc:
            return _issues_response(exc)
        state.db.add_audit(principal.user_id, "publish", rev.app, revision=rev.revision)
        return {"revision": rev.revision}

    @app.post("/api/apps/{name}/restore", status_code=201)
    def restore_app(name: str, body: dict, principal: Principal = Depends(_principal)):
        _require(principal, "admin")
        revision = body.get("revision")
        if not isinstance(revision, int):
            raise HTTPException(status_code=422, detail="revision must be an integer")
        try:
            rev = state.store.restore(name, revision, principal.user_id)
        except NotFoundError as exc:
            raise _not_found(str(exc))
        state.db.add_audit(principal.user_id, "restore", name, revision=rev.revision)
        return {"revision": rev.revision, "origin": rev.origin_label}

    @app.post("/api/runs", status_code=202)
    def create_run(body: dict, principal: Principal = Depends(_principal)):
        app_name = body.get("app")
        if not isinstance(app_name, str):
            raise HTTPException(status_code=422, detail="app name required")
        rev_no = body.get("rev")
        if rev_no is not None and not isinstance(rev_no, int):
            raise HTTPException(status_code=422, detail="rev must be an integer")
        raw_inputs = body.get("inputs", {})
        if not isinstance(raw_inputs, dict):
            raise HTTPException(status_code=422, detail="inputs must be an object")
        period = body.get("period", "default")
        if not isinstance(period, str) or not period:
            raise HTTPException(status_code=422, detail="period must be a non-empty string")

        try:
            revision = state.store.head(app_name) if rev_no is None else rev_no
            bundle = state.bundle(app_name, revision)
        except NotFoundError as exc:
            raise _not_found(str(exc))

        result = validate_inputs(bundle.defn, raw_inputs)
        if not result.ok:
            return JSONResponse(status_code=422, content={"field_errors": result.errors})

        if not state.slots.acquire(blocking=False):
            return JSONResponse(status_code=409, content={"detail": "run queue is full"})
        run_id = secrets.token_hex(16)
        state.db.create_run(
            run_id,
            principal.user_id,
            app_name,
            revision,
            period,
            encode_typed_inputs(result.typed),
        )
        state.db.add_audit(
            principal.user_id,
            "run-created",
            app_name,
            revision=revision,
            run_id=run_id,
            input_digest=input_digest(result.typed),
        )
        state.queue.put((run_id, True))
        return {"run_id": run_id, "revision": revision}

    @app.get("/api/runs/{run_id}")
    def get_run(run_id: str, principal: Principal = Depends(_principal)):
        rec = state.db.get_run(run_id)
        if rec is None or (rec.user_id != principal.user_id and not principal.at_least("admin")):
            raise _not_found("no such run")
        return _run_view(rec)

    @app.get("/api/reports/aggregate/{app_name}/{period}", response_class=HTMLResponse)
    def aggregate_report(
        app_name: str, period: str, principal: Principal = Depends(_principal)
    ):
        _require(principal, "author")
        bundle, table = _aggregate_for(state, app_name, period, None, None)
        agg = bundle.defn.report.aggregate
        if agg is None:
            raise HTTPException(
                status_code=422, detail="app declares no aggregate report region"
            )
        try:
            injected = inject_aggregate(bundle.workbooks[agg.workbook], agg.region, table)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        workbooks = dict(bundle.workbooks)
        workbooks[agg.workbook] = injected
        outcome = execute_pipeline(bundle.defn, workbooks, {}, graphs=bundle.graphs)
        meta = [
            ("App", bundle.defn.label),
            ("Period", period),
            ("Groups", str(len(table.groups))),
            ("Rows", str(sum(g.rows for g in table.groups))),
        ]
        html_doc = render_report(
            bundle.defn,
            outcome.outputs,
            scope="aggregate",
            title=f"{bundle.defn.label}: {period} aggregate",
            meta=meta,
        )
        return HTMLResponse(content=html_doc)

    @app.get("/api/reports/{run_id}", response_class=HTMLResponse)
    def run_report(run_id: str, principal: Principal = Depends(_principal)):
        rec = state.db.get_run(run_id)
        if rec is None or (rec.user_id != principal.user_id and not principal.at_least("admin")):
            raise _not_found("no such run")
        if rec.status != COMPLETED:
            raise _not_found(f"run is {rec.status}; no report available")
        bundle = state.bundle(rec.app, rec.revision)
        outputs = {
            oid: decode_output(doc) for oid, doc in json.loads(rec.outputs_json).items()
        }
        meta = [
            ("App", bundle.defn.label),
            ("Revision", str(rec.revision)),
            ("Run", rec.run_id),
            ("User", rec.user_id),
            ("Period", rec.period),
            ("Finished", rec.finished_at or ""),
        ]
        html_doc = render_report(
            bundle.defn,
            outputs,
            scope="run",
            title=f"{bundle.defn.label}: run report",
            meta=meta,
            flags=rec.flags,
        )
        return HTMLResponse(content=html_doc)

    @app.get("/api/audit")
    def audit(
        principal: Principal = Depends(_principal),
        user: str | None = None,
        app_name: str | None = Query(default=None, alias="app"),
        since: str | None = Query(default=None, alias="from"),
        until: str | None = Query(default=None, alias="to"),
    ):
        _require(principal, "admin")
        records = state.db.audit_query(user=user, app=app_name, since=since, until=until)
        return {"records": [r.as_dict() for r in records]}

    @app.get("/api/aggregate/{app_name}")
    def aggregate(
        app_name: str,
        period: str = "default",
        keys: str | None = None,
        measures: str | None = None,
        principal: Principal = Depends(_principal),
    ):
        _require(principal, "author")
        key_list = [k for k in keys.split(",") if k] if keys is not None else None
        measure_list = [m for m in measures.split(",") if m] if measures is not None else None
        _, table = _aggregate_for(state, app_name, period, key_list, measure_list)
        return {
            "app": table.app,
            "period": table.period,
            "keys": list(table.keys),
            "measures": list(table.measures),
            "groups": [
                {
                    "key": list(g.key),
                    "sums": g.sums,
                    "rows": g.rows,
                    "users": g.users,
                }
                for g in table.groups
            ],
            "totals": table.totals(),
        }

    static_dir = config.static_dir
    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    else:

        @app.get("/")
        def root():
            return {"service": "workbook app service", "api": "/api"}

    return app
