"""Certification records and their JSON/CSV serialisation.

Floats are written with ``repr`` (shortest round-trip form) in both formats,
so a value reads back bit-identical from either file. No timestamps.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

PASS, FAIL, ERROR = "pass", "fail", "error"
CSV_COLUMNS = ("name", "value", "kind", "passed", "tolerance", "citation", "note")


@dataclass
class Record:
    """One report line. ``passed`` is ``None`` for informational entries."""

    name: str
    value: Optional[float]
    kind: str
    passed: Optional[bool] = None
    tolerance: Optional[float] = None
    citation: str = ""
    note: str = ""

    @property
    def is_check(self) -> bool:
        return self.passed is not None


@dataclass
class CertificationReport:
    scenario: Dict[str, Any]
    records: List[Record] = field(default_factory=list)

    def add(self, *args, **kwargs) -> Record:
        rec = Record(*args, **kwargs)
        self.records.append(rec)
        return rec

    @property
    def errors(self) -> List[Record]:
        return [r for r in self.records if r.kind == "error"]

    @property
    def failures(self) -> List[Record]:
        return [r for r in self.records if r.passed is False]

    @property
    def verdict(self) -> str:
        if self.errors:
            return ERROR
        return FAIL if self.failures else PASS

    @property
    def exit_code(self) -> int:
        return {PASS: 0, FAIL: 2, ERROR: 1}[self.verdict]

    def to_json(self) -> str:
        doc = {
            "scenario": _plain(self.scenario),
            "results": [_record_dict(r) for r in self.records],
            "verdict": self.verdict,
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            d = _record_dict(r)
            w.writerow([_csv_cell(d[c]) for c in CSV_COLUMNS])
        w.writerow(["verdict", "", self.verdict, "", "", "", ""])
        return buf.getvalue()

    def render(self, fmt: str) -> str:
        return self.to_json() if fmt == "json" else self.to_csv()

    def lines(self) -> List[str]:
        out = []
        for r in self.records:
            if r.is_check:
                out.append(f"{'PASS' if r.passed else 'FAIL'} {r.name} = {fmt_float(r.value)} ({r.note})")
            elif r.kind == "error":
                out.append(f"ERROR {r.name}: {r.note}")
        out.append(f"verdict: {self.verdict}")
        return out


def fmt_float(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _num(x):
    # non-finite values are carried as strings so the JSON stays standard
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else fmt_float(x)


def _record_dict(r: Record) -> Dict[str, Any]:
    return {
        "name": r.name,
        "value": _num(r.value),
        "kind": r.kind,
        "passed": r.passed,
        "tolerance": _num(r.tolerance),
        "citation": r.citation,
        "note": r.note,
    }


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return fmt_float(v)
    return str(v)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, float):
        return _num(obj)
    return obj
