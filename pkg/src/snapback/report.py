"""Canonical JSON / CSV serialization of reports."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SnapbackError


def _float(x: float):
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def to_jsonable(obj):
    """Convert reports (dataclasses, numpy values, tuples) to plain JSON data.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
    """
    if hasattr(obj, "as_dict"):
        return to_jsonable(obj.as_dict())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable({f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)
                            if f.repr})
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    if isinstance(obj, complex):
        return {"re": _float(obj.real), "im": _float(obj.imag)}
    if isinstance(obj, np.complexfloating):
        return to_jsonable(complex(obj))
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(report) -> str:
    """Sorted keys, shortest round-trip float repr, trailing newline."""
    return json.dumps(to_jsonable(report), sort_keys=True, allow_nan=False, indent=2) + "\n"


@dataclass
class Table:
    header: list
    rows: list


def table_text(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.header)
    for row in table.rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    v = to_jsonable(v)
    return "" if v is None else (repr(v) if isinstance(v, float) else v)


def emit_report(report, fmt: str = "json", path=None) -> str:
    """Serialize ``report`` and write it to ``path`` (stdout if None)."""
    if fmt == "json":
        text = dumps(report)
    elif fmt == "csv":
        if not isinstance(report, Table):
            raise SnapbackError("CSV output needs a tabular report", format=fmt)
        text = table_text(report)
    else:
        raise SnapbackError(f"unknown output format {fmt!r}", format=fmt)
    if path is None:
        sys.stdout.write(text)
    else:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise SnapbackError(f"cannot write report: {exc.strerror}", path=str(path)) from exc
    return text
