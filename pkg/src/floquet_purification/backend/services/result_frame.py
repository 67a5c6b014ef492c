# src/floquet_purification/backend/services/result_frame.py
from __future__ import annotations

import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO, Union

import numpy as np
import pandas as pd

from floquet_purification import __version__

"""
result_frame.py
- 계산 결과 DataFrame + provenance(설정 echo, 내용 hash, 시각, 버전)
- CSV: '# key: value' 머리줄 + header + '%.17g'
- JSON: {"provenance", "columns", "rows"}, NaN → null
"""

FLOAT_FORMAT = "%.17g"


@dataclass
class ResultTable:
    name: str
    frame: pd.DataFrame
    provenance: Dict[str, Any] = field(default_factory=dict)
    extra: List["ResultTable"] = field(default_factory=list)   # 예: entropy fit 동반 표

    @property
    def columns(self) -> List[str]:
        return list(self.frame.columns)


def _payload_csv(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def content_hash(df: pd.DataFrame) -> str:
    """row payload 의 sha256 (provenance 머리줄 제외)."""
    return hashlib.sha256(_payload_csv(df).encode("utf-8")).hexdigest()


def _json_safe_value(v: Any) -> Any:
    if v is None or v is pd.NA:
        return None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else None
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, (list, tuple)):
        return [_json_safe_value(x) for x in v]
    if isinstance(v, dict):
        return {k: _json_safe_value(x) for k, x in v.items()}
    return v


def _json_safe_records(df: pd.DataFrame) -> List[Dict[str, Any]]:
    """NaN/±inf 를 JSON 이 이해하는 None 으로 치환."""
    clean_df = df.astype(object).where(pd.notna(df), None)
    return [{k: _json_safe_value(v) for k, v in row.items()} for row in clean_df.to_dict(orient="records")]


def make_table(name: str, frame: pd.DataFrame, config: Dict[str, Any]) -> ResultTable:
    provenance = {
        "command": name,
        "config": json.dumps(_json_safe_value(config), sort_keys=True),
        "content_sha256": content_hash(frame),
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "library_version": __version__,
        "rows": int(len(frame)),
    }
    return ResultTable(name=name, frame=frame, provenance=provenance)


def to_csv_text(table: ResultTable) -> str:
    buf = io.StringIO()
    for key, value in table.provenance.items():
        buf.write(f"# {key}: {value}\n")
    buf.write(_payload_csv(table.frame))
    return buf.getvalue()


def to_json_text(table: ResultTable) -> str:
    doc = {
        "provenance": _json_safe_value(table.provenance),
        "columns": table.columns,
        "rows": _json_safe_records(table.frame),
    }
    return json.dumps(doc, indent=2, ensure_ascii=False)


def read_csv_table(path: Union[str, Path]) -> ResultTable:
    """write_table 로 쓴 CSV 를 다시 읽는다 (provenance 머리줄 포함)."""
    provenance: Dict[str, Any] = {}
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    body_start = 0
    for i, line in enumerate(lines):
        if not line.startswith("# "):
            body_start = i
            break
        key, _, value = line[2:].partition(": ")
        provenance[key] = value
    frame = pd.read_csv(io.StringIO("\n".join(lines[body_start:])))
    return ResultTable(name=str(provenance.get("command", "")), frame=frame, provenance=provenance)


def write_table(table: ResultTable, out: Optional[Union[str, Path]], fmt: str = "csv", stream: Optional[TextIO] = None) -> List[str]:
    """
    ✅ 결과 표 출력
    - out 이 None 이면 stream(기본 stdout)으로
    - 동반 표(extra)는 '<stem>.<name>.<ext>' 로 옆에 쓴다
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"[result_frame] unknown format: {fmt}")
    render = to_csv_text if fmt == "csv" else to_json_text
    written: List[str] = []

    if out is None:
        target = stream or sys.stdout
        target.write(render(table))
        for sub in table.extra:
            target.write("\n")
            target.write(render(sub))
        return written

    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render(table), encoding="utf-8")
    written.append(str(path))
    for sub in table.extra:
        sub_path = path.with_name(f"{path.stem}.{sub.name}{path.suffix or '.' + fmt}")
        sub_path.write_text(render(sub), encoding="utf-8")
        written.append(str(sub_path))
    return written
