"""File based run store.

    <root>/index.duckdb                         run index (SQLAlchemy Core)
    <root>/runs/<run_id>/record.json            canonical record
    <root>/runs/<run_id>/traces/<digest>.<n>.part

Every file is written to a temporary name and renamed into place, so readers
never see half a record. The store is append only: a run id is written once,
storing an identical record again is a no-op and a different one is a
conflict."""

import json
import logging
import os
import re
import tempfile
import threading
from pathlib import Path
from typing import Dict, List, Optional

from sqlalchemy import Boolean, Column, Float, Integer, MetaData, String, Table, create_engine, insert, select
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.pool import NullPool

from ..aicore.trace import ExplorationTrace
from ..exceptions import ConflictError, SchemaError, StoreError, UnknownRun
from ..utils import canonical_json
from .record import RunRecord

logger = logging.getLogger(__name__)

TRACE_PART_CHARS = 1024 * 1024
_RUN_ID = re.compile(r"^[0-9A-Za-z_\-]+$")

metadata = MetaData()
runs_table = Table(
    "runs",
    metadata,
    Column("run_id", String, primary_key=True),
    Column("submitted_at", String, nullable=False),
    Column("phase", String, nullable=False),
    Column("complete", Boolean, nullable=False),
    Column("record_digest", String, nullable=False),
    Column("script_hash", String, nullable=False),
    Column("config_hash", String, nullable=False),
    # seeds use the full unsigned 64-bit range
    Column("run_seed", String, nullable=False),
    Column("steps", Integer, nullable=False),
    Column("success_rate", Float, nullable=False),
)


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class RunStore:
    def __init__(self, root):
        self.root = Path(root)
        self._locks: Dict[str, threading.Lock] = {}
        self._guard = threading.Lock()
        self._engine = None

    # ---------------------------------------------------------------- index
    @property
    def engine(self):
        if self._engine is None:
            self.root.mkdir(parents=True, exist_ok=True)
            # connections are not pooled so the index file is only held while in use
            self._engine = create_engine(f"duckdb:///{self.root / 'index.duckdb'}", poolclass=NullPool)
            metadata.create_all(self._engine)
        return self._engine

    def _index(self, record: RunRecord):
        row = {
            "run_id": record.run_id,
            "submitted_at": record.submitted_at,
            "phase": record.phase,
            "complete": record.complete,
            "record_digest": record.digest(),
            "script_hash": record.script_hash,
            "config_hash": record.config_hash,
            "run_seed": str(record.run_seed),
            "steps": len(record.per_step),
            "success_rate": record.kpi.action_success_rate,
        }
        try:
            with self.engine.begin() as conn:
                found = conn.execute(
                    select(runs_table.c.run_id).where(runs_table.c.run_id == record.run_id)
                ).first()
                if found is None:
                    conn.execute(insert(runs_table).values(**row))
        except SQLAlchemyError as e:
            raise StoreError(f"Unable to index run {record.run_id}: {e}")

    def list_runs(self) -> List[dict]:
        """Indexed runs, newest first"""
        try:
            with self.engine.connect() as conn:
                rows = conn.execute(select(runs_table).order_by(runs_table.c.run_id.desc())).mappings().all()
        except SQLAlchemyError as e:
            raise StoreError(f"Unable to read the run index: {e}")
        return [dict(r) for r in rows]

    # ---------------------------------------------------------------- paths
    def run_dir(self, run_id) -> Path:
        if not _RUN_ID.match(run_id):
            raise UnknownRun(run_id)
        return self.root / "runs" / run_id

    def record_path(self, run_id) -> Path:
        return self.run_dir(run_id) / "record.json"

    def _lock(self, run_id) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(run_id, threading.Lock())

    # ---------------------------------------------------------------- write
    def store(self, record: RunRecord, traces: Optional[Dict[str, dict]] = None) -> bool:
        """Persist a record and the trace documents it references. Returns
        False when the identical record was already stored."""
        record.check()
        text = canonical_json(record.to_dict())
        path = self.record_path(record.run_id)
        with self._lock(record.run_id):
            try:
                if path.exists():
                    if path.read_text(encoding="utf-8") != text:
                        raise ConflictError(record.run_id)
                    # repairs an index that missed the first store
                    self._index(record)
                    return False
                for ref in record.traces:
                    if traces and ref.digest in traces:
                        self._store_trace(record.run_id, traces[ref.digest])
                _atomic_write(path, text)
            except OSError as e:
                raise StoreError(f"Unable to store run {record.run_id}: {e}")
            self._index(record)
        logger.info(f"Stored run {record.run_id} ({record.phase}, complete={record.complete})")
        return True

    def _store_trace(self, run_id, doc: dict):
        digest = doc["digest"]
        data = canonical_json(doc)
        total = max(1, -(-len(data) // TRACE_PART_CHARS))
        trace_dir = self.run_dir(run_id) / "traces"
        for n in range(total):
            part = trace_dir / f"{digest}.{n}.part"
            if not part.exists():
                _atomic_write(part, data[n * TRACE_PART_CHARS : (n + 1) * TRACE_PART_CHARS])

    # ----------------------------------------------------------------- read
    def load(self, run_id) -> RunRecord:
        path = self.record_path(run_id)
        if not path.exists():
            raise UnknownRun(run_id)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise StoreError(f"Unable to read run {run_id}: {e}")
        return RunRecord.from_dict(doc)

    def has_trace(self, run_id, digest) -> bool:
        return (self.run_dir(run_id) / "traces" / f"{digest}.0.part").exists()

    def load_trace(self, run_id, digest) -> dict:
        trace_dir = self.run_dir(run_id) / "traces"
        parts = sorted(trace_dir.glob(f"{digest}.*.part"), key=lambda p: int(p.name.split(".")[1]))
        if not parts:
            raise StoreError(f"Trace {digest} of run {run_id} is not stored")
        doc = json.loads("".join(p.read_text(encoding="utf-8") for p in parts))
        if ExplorationTrace.from_dict(doc).digest() != digest:
            raise SchemaError(f"Stored trace {digest} does not match its digest")
        return doc
