from sqlalchemy import create_engine, event
from sqlalchemy.exc import IntegrityError, OperationalError
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import QueuePool, StaticPool
from models import Base, RunRecord
from manifest import RunManifest
from config import DATABASE_URL
import json
import time
import logging

logger = logging.getLogger(__name__)

def execute_with_retry(func, max_retries=7, delay=0.1):
    """Execute a database operation with retry logic for database locking errors."""
    for attempt in range(max_retries):
        try:
            return func()
        except OperationalError as e:
            error_msg = str(e).lower()
            if ("database is locked" in error_msg or
                "database locked" in error_msg or
                "lock wait timeout" in error_msg or
                "deadlock" in error_msg) and attempt < max_retries - 1:
                logger.warning(f"Run store busy, retrying in {delay}s... (attempt {attempt + 1}/{max_retries})")
                time.sleep(delay)
                delay *= 2.5  # Exponential backoff
            else:
                raise

def get_engine(url=None):
    """Create the run-store engine; in-memory SQLite shares one connection."""
    url = url or DATABASE_URL
    if url.startswith("postgresql://"):
        return create_engine(url, pool_size=5, max_overflow=10, pool_pre_ping=True, pool_recycle=300, echo=False)
    if url.startswith("mysql://") or url.startswith("mysql+pymysql://"):
        return create_engine(
            url,
            pool_size=5,
            max_overflow=10,
            pool_pre_ping=True,
            pool_recycle=300,
            echo=False,
            connect_args={"connect_timeout": 30, "charset": "utf8mb4"}
        )
    if not url.startswith("sqlite:"):
        return create_engine(url, pool_pre_ping=True, pool_recycle=300, echo=False)
    if url in ("sqlite://", "sqlite:///:memory:"):
        return create_engine(url, poolclass=StaticPool, connect_args={"check_same_thread": False}, echo=False)

    engine = create_engine(
        url,
        poolclass=QueuePool,
        pool_size=5,
        max_overflow=10,
        pool_pre_ping=True,
        echo=False,
        connect_args={"timeout": 30, "check_same_thread": False}
    )

    # WAL lets the CLI and the service write concurrently
    @event.listens_for(engine, "connect")
    def set_sqlite_pragma(dbapi_connection, connection_record):
        cursor = dbapi_connection.cursor()
        cursor.execute("PRAGMA journal_mode=WAL")
        cursor.execute("PRAGMA synchronous=NORMAL")
        cursor.close()

    return engine

def _to_manifest(record):
    return RunManifest(
        command=record.command,
        config=record.config,
        config_digest=record.config_digest,
        seed=int(record.seed) if record.seed else None,
        tool_version=record.tool_version,
        outputs=json.loads(record.outputs or '[]'),
    )

class RunStore:
    def __init__(self, engine=None):
        self.engine = engine or get_engine()
        Base.metadata.create_all(bind=self.engine)
        self.SessionLocal = sessionmaker(bind=self.engine)

    def record(self, manifest, summary=None):
        """Store a run; recording the same run twice keeps the first record."""
        def execute_record():
            db = self.SessionLocal()
            try:
                if db.get(RunRecord, manifest.run_id) is not None:
                    logger.info(f"Run {manifest.run_id[:12]} already recorded")
                    return False
                db.add(RunRecord(
                    id=manifest.run_id,
                    command=manifest.command,
                    config_digest=manifest.config_digest,
                    seed=None if manifest.seed is None else str(manifest.seed),
                    tool_version=manifest.tool_version,
                    config=manifest.config,
                    outputs=json.dumps(manifest.outputs),
                    summary=json.dumps(summary, sort_keys=True) if summary is not None else None,
                ))
                db.commit()
                logger.info(f"📝 Recorded {manifest.command} run {manifest.run_id[:12]}")
                return True
            except IntegrityError:
                # a concurrent writer got there first
                db.rollback()
                return False
            except Exception:
                db.rollback()
                raise
            finally:
                db.close()

        return execute_with_retry(execute_record)

    def get(self, run_id):
        def execute_get():
            db = self.SessionLocal()
            try:
                record = db.get(RunRecord, run_id)
                return _to_manifest(record) if record else None
            finally:
                db.close()

        return execute_with_retry(execute_get)

    def summary(self, run_id):
        def execute_summary():
            db = self.SessionLocal()
            try:
                record = db.get(RunRecord, run_id)
                return json.loads(record.summary) if record and record.summary else None
            finally:
                db.close()

        return execute_with_retry(execute_summary)

    def recent(self, limit=10):
        """Most recent runs first."""
        def execute_recent():
            db = self.SessionLocal()
            try:
                records = db.query(RunRecord).order_by(RunRecord.created_at.desc()).limit(limit).all()
                return [{
                    "run_id": r.id,
                    "command": r.command,
                    "config_digest": r.config_digest,
                    "seed": r.seed,
                    "created_at": r.created_at.isoformat() if r.created_at else None
                } for r in records]
            finally:
                db.close()

        return execute_with_retry(execute_recent)
