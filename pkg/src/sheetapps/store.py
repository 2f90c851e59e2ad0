"""Append-only publication store: versioned (definition + workbooks) snapshots.

One directory per app, one subdirectory per revision. Stored bytes are the
canonical serializations, so equal content is byte-identical wherever it
appears in history, and a restore can be checked by byte comparison.
A single catalog file maps app names to head revisions; it is replaced via
write-then-rename so readers always see a complete document.

Revisions are immutable: nothing here ever rewrites or deletes a published
snapshot. Restores append a new head that copies an old revision's bytes.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .appdef import (
    DefinitionError,
    EasapDefinition,
    Issue,
    parse_definition,
    serialize_definition,
    validate_definition,
)
from .workbook import Workbook, WorkbookError, load_workbook, serialize_workbook

CATALOG_FILE = "catalog.json"


class NotFoundError(KeyError):
    """Unknown app or revision."""

    def __str__(self) -> str:  # KeyError quotes its arg; keep the message readable
        return self.args[0] if self.args else ""


class StoreError(RuntimeError):
    """Corrupted or inconsistent on-disk state."""


class PublishRejected(ValueError):
    """Definition failed validation; carries the issue list."""

    def __init__(self, issues: list[Issue]):
        self.issues = issues
        lines = "; ".join(str(i) for i in issues)
        super().__init__(f"definition failed validation: {lines}")


@dataclass(frozen=True)
class PublishedRevision:
    app: str
    revision: int
    definition_text: str
    workbook_texts: dict[str, str]  # workbook id -> canonical file text
    author: str
    published_at: str  # UTC ISO-8601
    origin: int | None = None  # revision this one restored, None = fresh

    @property
    def origin_label(self) -> str:
        return "fresh" if self.origin is None else f"restore-of({self.origin})"

    def definition(self) -> EasapDefinition:
        return parse_definition(self.definition_text)

    def workbooks(self) -> dict[str, Workbook]:
        return {wid: load_workbook(text) for wid, text in self.workbook_texts.items()}


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


class PublicationStore:
    """Filesystem-backed revision store; safe for concurrent readers.

    Writes to the same app are serialized with a per-app lock, so two
    publishes cannot claim the same revision number. The store holds no
    open state and can be reopened over an existing directory.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "apps").mkdir(exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _app_lock(self, app: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(app, threading.Lock())

    def _read_catalog(self) -> dict:
        path = self.root / CATALOG_FILE
        if not path.exists():
            return {"apps": {}}
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise StoreError(f"catalog unreadable: {exc}") from None

    def _write_catalog(self, catalog: dict) -> None:
        data = json.dumps(catalog, sort_keys=True, indent=2, ensure_ascii=False).encode("utf-8")
        _write_atomic(self.root / CATALOG_FILE, data)

    def _rev_dir(self, app: str, revision: int) -> Path:
        return self.root / "apps" / app / f"r{revision}"

    def catalog(self) -> list[dict]:
        """[{name, label, latest_revision}], sorted by name."""
        apps = self._read_catalog()["apps"]
        return [
            {"name": name, "label": entry["label"], "latest_revision": entry["head"]}
            for name, entry in sorted(apps.items())
        ]

    def head(self, app: str) -> int:
        entry = self._read_catalog()["apps"].get(app)
        if entry is None:
            raise NotFoundError(f"unknown app {app!r}")
        return entry["head"]

    def publish(
        self, definition_text: str, workbook_texts: dict[str, str], author: str
    ) -> PublishedRevision:
        """Validate and append a new head revision.

        Rejection consumes no revision number; the store is untouched.
        Malformed documents are reported the same way as validation
        issues, so callers handle one rejection shape.
        """
        try:
            defn = parse_definition(definition_text)
        except DefinitionError as exc:
            raise PublishRejected([Issue(exc.path, exc.message)]) from None
        if set(workbook_texts) != set(defn.workbooks):
            missing = sorted(set(defn.workbooks) - set(workbook_texts))
            extra = sorted(set(workbook_texts) - set(defn.workbooks))
            parts = []
            if missing:
                parts.append(f"missing workbooks: {', '.join(missing)}")
            if extra:
                parts.append(f"undeclared workbooks: {', '.join(extra)}")
            raise PublishRejected([Issue("workbooks", "; ".join(parts))])

        workbooks = {}
        for wid, text in workbook_texts.items():
            try:
                workbooks[wid] = load_workbook(text)
            except WorkbookError as exc:
                raise PublishRejected([Issue(f"workbooks.{wid}", str(exc))]) from None
        issues = validate_definition(defn, workbooks)
        if issues:
            raise PublishRejected(issues)

        canonical_def = serialize_definition(defn)
        canonical_wbs = {wid: serialize_workbook(wb) for wid, wb in workbooks.items()}
        return self._append(defn.name, defn, canonical_def, canonical_wbs, author, origin=None)

    def _append(
        self,
        app: str,
        defn: EasapDefinition,
        definition_text: str,
        workbook_texts: dict[str, str],
        author: str,
        *,
        origin: int | None,
    ) -> PublishedRevision:
        with self._app_lock(app):
            catalog = self._read_catalog()
            entry = catalog["apps"].get(app)
            revision = 1 if entry is None else entry["head"] + 1
            rev_dir = self._rev_dir(app, revision)
            if rev_dir.exists():
                raise StoreError(f"revision directory {rev_dir} already exists")
            rev_dir.mkdir(parents=True)

            published_at = datetime.now(timezone.utc).isoformat()
            hashes: dict[str, str] = {}
            def_bytes = definition_text.encode("utf-8")
            (rev_dir / "definition.json").write_bytes(def_bytes)
            hashes["definition.json"] = _sha256(def_bytes)
            for wid, fname in defn.workbooks.items():
                wb_bytes = workbook_texts[wid].encode("utf-8")
                (rev_dir / fname).write_bytes(wb_bytes)
                hashes[fname] = _sha256(wb_bytes)

            manifest = {
                "app": app,
                "revision": revision,
                "author": author,
                "published_at": published_at,
                "origin": origin,
                "label": defn.label,
                "workbooks": dict(defn.workbooks),
                "hashes": hashes,
            }
            _write_atomic(
                rev_dir / "manifest.json",
                json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=False).encode("utf-8"),
            )

            catalog["apps"][app] = {"label": defn.label, "head": revision}
            self._write_catalog(catalog)

        return PublishedRevision(
            app=app,
            revision=revision,
            definition_text=definition_text,
            workbook_texts=workbook_texts,
            author=author,
            published_at=published_at,
            origin=origin,
        )

    def get(self, app: str, revision: int | None = None) -> PublishedRevision:
        """Fetch a revision (latest if omitted), verifying stored hashes."""
        if revision is None:
            revision = self.head(app)
        rev_dir = self._rev_dir(app, revision)
        manifest_path = rev_dir / "manifest.json"
        if not manifest_path.exists():
            if not (self.root / "apps" / app).exists():
                raise NotFoundError(f"unknown app {app!r}")
            raise NotFoundError(f"app {app!r} has no revision {revision}")
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise StoreError(f"manifest unreadable for {app} r{revision}: {exc}") from None

        def read_verified(fname: str) -> str:
            data = (rev_dir / fname).read_bytes()
            if _sha256(data) != manifest["hashes"][fname]:
                raise StoreError(f"content hash mismatch for {app} r{revision}/{fname}")
            return data.decode("utf-8")

        definition_text = read_verified("definition.json")
        workbook_texts = {
            wid: read_verified(fname) for wid, fname in manifest["workbooks"].items()
        }
        return PublishedRevision(
            app=app,
            revision=revision,
            definition_text=definition_text,
            workbook_texts=workbook_texts,
            author=manifest["author"],
            published_at=manifest["published_at"],
            origin=manifest["origin"],
        )

    def restore(self, app: str, revision: int, author: str) -> PublishedRevision:
        """Append a new head whose content bytes copy an old revision's."""
        target = self.get(app, revision)
        defn = target.definition()
        return self._append(
            app,
            defn,
            target.definition_text,
            target.workbook_texts,
            author,
            origin=revision,
        )
