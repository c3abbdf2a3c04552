import threading
import time
from collections import deque
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Optional

from .constants import LOG_MAX_MEMORY_ENTRIES, LOG_RECENT_LIMIT_DEFAULT
from .db import get_db_paths
from .sqlite_repos import EventLogRepo, LedgerRepo


def timestamp_to_datetime(ts: float) -> datetime:
    return datetime.fromtimestamp(ts, timezone.utc)


class LogLevel(Enum):
    DEBUG = "debug"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"


@dataclass
class RunEvent:
    """运行事件（Picard 进度、停时、混叠、约束违例、系统）"""
    id: str
    timestamp: float
    level: str
    type: str
    message: Optional[str] = None
    error: Optional[str] = None
    component: Optional[str] = None
    level_q: Optional[int] = None
    value: Optional[float] = None
    duration_ms: Optional[float] = None

    def to_dict(self) -> dict:
        data = asdict(self)
        data["timestamp_str"] = timestamp_to_datetime(self.timestamp).strftime("%Y-%m-%d %H:%M:%S.%f")[:-3]
        return data


class LogManager:
    """
    事件日志管理器

    事件总是进入内存队列；调用 attach(out_dir) 之后同时写入 <out>/events.db。
    事件时间戳只出现在数据库中，不进入 JSON/CSV 报告。
    """

    def __init__(self, max_memory_logs: int = LOG_MAX_MEMORY_ENTRIES):
        self.max_memory_logs = max_memory_logs
        self._logs: deque = deque(maxlen=max_memory_logs)
        self._log_counter = 0
        self._lock = threading.Lock()
        self._event_repo: Optional[EventLogRepo] = None
        self._ledger_repo: Optional[LedgerRepo] = None

    def attach(self, out_dir: str) -> None:
        """把事件持久化到输出目录"""
        paths = get_db_paths(out_dir)
        self._event_repo = EventLogRepo(paths)
        self._ledger_repo = LedgerRepo(paths)

    def detach(self) -> None:
        self._event_repo = None
        self._ledger_repo = None

    def _generate_log_id(self) -> str:
        self._log_counter += 1
        return f"evt_{int(time.time() * 1000)}_{self._log_counter}"

    def log_event(
        self,
        level: LogLevel,
        event_type: str,
        message: str,
        component: Optional[str] = None,
        level_q: Optional[int] = None,
        value: Optional[float] = None,
        error: Optional[str] = None,
        duration_ms: Optional[float] = None,
    ) -> RunEvent:
        ts = time.time()
        with self._lock:
            entry = RunEvent(
                id=self._generate_log_id(),
                timestamp=ts,
                level=level.value,
                type=event_type,
                message=message,
                error=error,
                component=component,
                level_q=level_q,
                value=None if value is None else float(value),
                duration_ms=duration_ms,
            )
            self._logs.append(entry)
            repo = self._event_repo

        if repo is not None:
            repo.insert(
                {
                    "id": entry.id,
                    "timestamp_ms": int(ts * 1000),
                    "level": entry.level,
                    "type": entry.type,
                    "message": entry.message,
                    "error": entry.error,
                    "component": entry.component,
                    "level_q": entry.level_q,
                    "value": entry.value,
                    "duration_ms": entry.duration_ms,
                }
            )
        return entry

    def record_ledger(self, rows: list[dict]) -> None:
        """把诊断账本镜像到 ledger 表（未 attach 时忽略）"""
        if self._ledger_repo is not None:
            self._ledger_repo.insert_many(rows)

    def get_recent_events(
        self,
        limit: int = LOG_RECENT_LIMIT_DEFAULT,
        level: Optional[str] = None,
        event_type: Optional[str] = None,
    ) -> list[dict]:
        if self._event_repo is not None:
            return self._event_repo.get_recent(limit=limit, level=level, event_type=event_type)
        with self._lock:
            events = list(self._logs)
        selected = [
            e.to_dict() for e in reversed(events)
            if (level is None or e.level == level) and (event_type is None or e.type == event_type)
        ]
        return selected[:limit]

    def clear(self) -> None:
        with self._lock:
            self._logs.clear()


log_manager = LogManager()
