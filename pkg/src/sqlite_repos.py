from contextlib import contextmanager
from typing import Any, Generator, Optional

from .db import DbPaths, connect_sqlite, init_db


@contextmanager
def get_db_cursor(db_path: str) -> Generator[Any, None, None]:
    """Context manager for SQLite database connection and cursor."""
    conn = connect_sqlite(db_path)
    try:
        cur = conn.cursor()
        yield cur
        conn.commit()
    except Exception:
        conn.rollback()
        raise
    finally:
        conn.close()


class EventLogRepo:
    """Repository for run events (picard, stopping, aliasing, constraint, system)"""

    def __init__(self, paths: DbPaths):
        self._paths = paths
        init_db(paths)

    def insert(self, entry: dict[str, Any]) -> None:
        with get_db_cursor(self._paths.events_db_path) as cur:
            cur.execute(
                """
                INSERT INTO run_events (
                  id, timestamp_ms, level, type, message, error,
                  component, level_q, value, duration_ms
                ) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
                """,
                (
                    entry["id"],
                    entry["timestamp_ms"],
                    entry["level"],
                    entry["type"],
                    entry.get("message"),
                    entry.get("error"),
                    entry.get("component"),
                    entry.get("level_q"),
                    entry.get("value"),
                    entry.get("duration_ms"),
                ),
            )

    def get_recent(
        self,
        limit: int,
        level: Optional[str] = None,
        event_type: Optional[str] = None,
    ) -> list[dict]:
        with get_db_cursor(self._paths.events_db_path) as cur:
            query = "SELECT * FROM run_events WHERE 1=1"
            params: list[Any] = []

            if level:
                query += " AND level = ?"
                params.append(level)
            if event_type:
                query += " AND type = ?"
                params.append(event_type)
            query += " ORDER BY timestamp_ms DESC, id DESC LIMIT ?"
            params.append(limit)

            cur.execute(query, params)
            rows = cur.fetchall()

        return [
            {
                "id": r["id"],
                "timestamp": r["timestamp_ms"] / 1000.0,
                "level": r["level"],
                "type": r["type"],
                "message": r["message"],
                "error": r["error"],
                "component": r["component"],
                "level_q": r["level_q"],
                "value": r["value"],
                "duration_ms": r["duration_ms"],
            }
            for r in rows
        ]


class LedgerRepo:
    """Mirror of the diagnostics ledger rows"""

    def __init__(self, paths: DbPaths):
        self._paths = paths
        init_db(paths)

    def insert_many(self, rows: list[dict[str, Any]]) -> None:
        if not rows:
            return
        with get_db_cursor(self._paths.events_db_path) as cur:
            cur.executemany(
                """
                INSERT INTO ledger (level_q, window_label, norm_name, value, target, pass)
                VALUES (?, ?, ?, ?, ?, ?)
                """,
                [
                    (
                        r["level"],
                        r["window"],
                        r["norm_name"],
                        r["value"],
                        r.get("target"),
                        None if r.get("pass") is None else int(bool(r["pass"])),
                    )
                    for r in rows
                ],
            )

    def list(self, level_q: Optional[int] = None) -> list[dict]:
        with get_db_cursor(self._paths.events_db_path) as cur:
            if level_q is None:
                cur.execute("SELECT * FROM ledger ORDER BY id")
            else:
                cur.execute("SELECT * FROM ledger WHERE level_q = ? ORDER BY id", (level_q,))
            rows = cur.fetchall()
        return [
            {
                "level": r["level_q"],
                "window": r["window_label"],
                "norm_name": r["norm_name"],
                "value": r["value"],
                "target": r["target"],
                "pass": None if r["pass"] is None else bool(r["pass"]),
            }
            for r in rows
        ]
