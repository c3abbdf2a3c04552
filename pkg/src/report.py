"""
报告输出：账本表格、CSV 与 report.json

CSV 使用 RFC-4180 格式（\r\n 行尾，UTF-8），浮点数按 repr 写出，读回后与原值逐位相同。
JSON 中的非有限浮点数写成 null。
"""

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

import numpy as np

from .schemas import LedgerRow, RunReport

LEDGER_COLUMNS: tuple[str, ...] = ("level", "window", "norm_name", "value", "target", "pass")


# ==================== 单元格 ====================

def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_float(text: str) -> Optional[float]:
    return None if text == "" else float(text)


def _parse_bool(text: str) -> Optional[bool]:
    if text == "":
        return None
    if text not in ("true", "false"):
        raise ValueError(f"无法解析的布尔值: {text!r}")
    return text == "true"


# ==================== CSV ====================

def write_csv(path: Union[str, Path], columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """按给定列顺序写出 CSV；没有行时只写表头"""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def write_dict_csv(path: Union[str, Path], rows: Sequence[dict], columns: Optional[Sequence[str]] = None) -> None:
    """字典行的 CSV；未给列名时取第一行的键顺序"""
    cols = list(columns) if columns is not None else (list(rows[0]) if rows else [])
    write_csv(path, cols, ([row.get(c) for c in cols] for row in rows))


def ledger_rows(ledger: Sequence[LedgerRow]) -> list[list]:
    return [[row.as_row()[c] for c in LEDGER_COLUMNS] for row in ledger]


def read_ledger_csv(path: Union[str, Path]) -> list[LedgerRow]:
    """
    读回 ledger.csv

    Raises:
        ValueError: 表头与固定列顺序不一致
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != LEDGER_COLUMNS:
            raise ValueError(f"账本表头不正确: {header}")
        out = []
        for level, window, name, value, target, passed in reader:
            out.append(LedgerRow(
                level=int(level),
                window=window,
                norm_name=name,
                value=float(value),
                target=_parse_float(target),
                passed=_parse_bool(passed),
            ))
    return out


# ==================== 表格 ====================

def _fmt(value: Optional[float]) -> str:
    if value is None:
        return "-"
    return f"{value:.6e}"


def render_table(ledger: Sequence[LedgerRow]) -> str:
    """按层分组的定宽表格"""
    if not ledger:
        return "(空账本)"
    w_window = max(len("window"), max(len(r.window) for r in ledger))
    w_name = max(len("norm_name"), max(len(r.norm_name) for r in ledger))
    head = f"{'window':<{w_window}}  {'norm_name':<{w_name}}  {'value':>13}  {'target':>13}  pass"
    lines: list[str] = []
    current = None
    for row in ledger:
        if row.level != current:
            current = row.level
            if lines:
                lines.append("")
            lines.append(f"q = {current}")
            lines.append(head)
            lines.append("-" * len(head))
        mark = "-" if row.passed is None else ("ok" if row.passed else "FAIL")
        lines.append(f"{row.window:<{w_window}}  {row.norm_name:<{w_name}}  "
                     f"{_fmt(row.value):>13}  {_fmt(row.target):>13}  {mark}")
    return "\n".join(lines)


def report_render(ledger: Sequence[LedgerRow], csv_path: Optional[Union[str, Path]] = None) -> str:
    """返回可读表格；给出路径时同时写出 CSV"""
    if csv_path is not None:
        write_csv(csv_path, LEDGER_COLUMNS, ledger_rows(ledger))
    return render_table(ledger)


# ==================== JSON ====================

def plain(obj: Any) -> Any:
    """numpy 标量与数组转换为内置类型，dataclass 报告调用其 to_dict"""
    if hasattr(obj, "to_dict"):
        return plain(obj.to_dict())
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    return obj


def _finite(obj: Any) -> Any:
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def report_payload(report: RunReport) -> dict:
    return _finite(report.model_dump(mode="json", by_alias=True))


def write_report(path: Union[str, Path], report: RunReport) -> None:
    """键顺序固定、无时间戳，相同输入得到逐字节相同的文件"""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(report_payload(report), indent=2, ensure_ascii=False, allow_nan=False)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")
