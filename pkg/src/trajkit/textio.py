"""Canonical JSON text shared by the scene, manifest, report and checkpoint documents.

Keys are sorted, indentation is two spaces, containers holding only scalars
(or lists of scalars) sit on one line, and floats use the shortest
round-trip decimal form with integral values written without ``.0``.
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

from .errors import ParseError, ValidationError


def format_float(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValidationError(f"cannot serialize non-finite value {x}", "value", "finite")
    if x == 0.0:
        return "0"
    s = repr(x)
    return s[:-2] if s.endswith(".0") else s


def _scalar(v: Any) -> str:
    if isinstance(v, bool) or v is None:
        return json.dumps(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _is_flat(v: Any) -> bool:
    if isinstance(v, dict):
        return all(not isinstance(x, (dict, list, tuple)) or (isinstance(x, (list, tuple)) and _is_flat(x)) for x in v.values())
    if isinstance(v, (list, tuple)):
        return all(not isinstance(x, (dict, list, tuple)) for x in v)
    return True


def _emit(v: Any, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    if isinstance(v, dict):
        keys = sorted(v)
        if _is_flat(v):
            out.append("{" + ", ".join(f"{json.dumps(k)}: {_inline(v[k])}" for k in keys) + "}")
            return
        out.append("{\n")
        for i, k in enumerate(keys):
            out.append(f"{pad}  {json.dumps(k)}: ")
            _emit(v[k], indent + 1, out)
            out.append(",\n" if i < len(keys) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(v, (list, tuple)):
        if _is_flat(v):
            out.append(_inline(v))
            return
        out.append("[\n")
        for i, x in enumerate(v):
            out.append(pad + "  ")
            _emit(x, indent + 1, out)
            out.append(",\n" if i < len(v) - 1 else "\n")
        out.append(pad + "]")
    else:
        out.append(_scalar(v))


def _inline(v: Any) -> str:
    if isinstance(v, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_inline(v[k])}" for k in sorted(v)) + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_inline(x) for x in v) + "]"
    return _scalar(v)


def canonical_dumps(obj: Any) -> str:
    out: list[str] = []
    _emit(obj, 0, out)
    out.append("\n")
    return "".join(out)


def loads(data: bytes | str) -> Any:
    if isinstance(data, (bytes, bytearray)):
        try:
            text = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            head = bytes(data[: exc.start])
            line = head.count(b"\n") + 1
            raise ParseError(f"invalid UTF-8: {exc.reason}", line, exc.start - (head.rfind(b"\n") + 1) + 1) from None
    else:
        text = data
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
