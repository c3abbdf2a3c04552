import sqlite3
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .constants import EVENTS_DB_FILENAME

DEFAULT_OUT_DIR = "runs/latest"


@dataclass(frozen=True)
class DbPaths:
    events_db_path: str = f"{DEFAULT_OUT_DIR}/{EVENTS_DB_FILENAME}"


def _ensure_parent_dir(path: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)


def get_db_paths(out_dir: str = DEFAULT_OUT_DIR) -> DbPaths:
    return DbPaths(events_db_path=str(Path(out_dir) / EVENTS_DB_FILENAME))


def connect_sqlite(path: str) -> sqlite3.Connection:
    _ensure_parent_dir(path)
    conn = sqlite3.connect(path, check_same_thread=False)
    conn.row_factory = sqlite3.Row
    _apply_pragmas(conn)
    return conn


def _apply_pragmas(conn: sqlite3.Connection) -> None:
    statements: Sequence[str] = (
        "PRAGMA journal_mode=WAL;",
        "PRAGMA synchronous=NORMAL;",
        "PRAGMA foreign_keys=ON;",
        "PRAGMA busy_timeout=5000;",
    )
    cur = conn.cursor()
    for stmt in statements:
        cur.execute(stmt)
    cur.close()


def init_schema_events(conn: sqlite3.Connection) -> None:
    conn.executescript(
        """
        CREATE TABLE IF NOT EXISTS run_events (
          id TEXT PRIMARY KEY,
          timestamp_ms INTEGER NOT NULL,
          level TEXT NOT NULL,
          type TEXT NOT NULL,
          message TEXT,
          error TEXT,
          component TEXT,
          level_q INTEGER,
          value REAL,
          duration_ms REAL
        );
        CREATE INDEX IF NOT EXISTS idx_run_events_ts
          ON run_events(timestamp_ms);
        CREATE INDEX IF NOT EXISTS idx_run_events_type
          ON run_events(type, timestamp_ms);

        CREATE TABLE IF NOT EXISTS ledger (
          id INTEGER PRIMARY KEY AUTOINCREMENT,
          level_q INTEGER NOT NULL,
          window_label TEXT NOT NULL,
          norm_name TEXT NOT NULL,
          value REAL,
          target REAL,
          pass INTEGER
        );
        CREATE INDEX IF NOT EXISTS idx_ledger_level
          ON ledger(level_q, norm_name);
        """
    )


def init_db(paths: DbPaths) -> None:
    conn = connect_sqlite(paths.events_db_path)
    try:
        init_schema_events(conn)
        conn.commit()
    finally:
        conn.close()
