"""Deterministic JSON emission with floats at 17 significant digits.

The stdlib ``json`` module hardwires ``repr`` for floats, which produces the
shortest round-tripping string rather than a fixed precision.  Report and
certificate files promise 17 significant digits and byte-identical output for
identical inputs, so we serialize by hand.  Key order is insertion order.
"""

import math

import numpy as np


def format_real(value):
    """Render a float with 17 significant digits ('%.17g')."""
    if isinstance(value, (np.floating,)):
        value = float(value)
    if math.isnan(value) or math.isinf(value):
        raise ValueError(f"cannot serialize non-finite real {value!r}")
    return format(value, ".17g")


def _escape(text):
    out = ["\""]
    for ch in text:
        if ch == "\"":
            out.append("\\\"")
        elif ch == "\\":
            out.append("\\\\")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\r":
            out.append("\\r")
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append("\"")
    return "".join(out)


def dumps(obj, indent=None):
    """Serialize dicts/lists/scalars to JSON text deterministically."""
    pieces = []
    _write(obj, pieces, indent, 0)
    return "".join(pieces)


def _write(obj, out, indent, depth):
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, str):
        out.append(_escape(obj))
    elif isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_real(obj))
    elif isinstance(obj, dict):
        _write_items(obj.items(), out, indent, depth, "{", "}", keyed=True)
    elif isinstance(obj, (list, tuple)):
        _write_items(obj, out, indent, depth, "[", "]", keyed=False)
    elif isinstance(obj, np.ndarray):
        _write_items(obj.tolist(), out, indent, depth, "[", "]", keyed=False)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_items(items, out, indent, depth, open_ch, close_ch, keyed):
    items = list(items)
    if not items:
        out.append(open_ch + close_ch)
        return
    out.append(open_ch)
    pad = ""
    if indent is not None:
        pad = "\n" + " " * (indent * (depth + 1))
    for i, item in enumerate(items):
        if i:
            out.append(",")
        out.append(pad)
        if keyed:
            key, value = item
            if not isinstance(key, str):
                raise TypeError(f"non-string key {key!r}")
            out.append(_escape(key))
            out.append(": " if indent is not None else ":")
            _write(value, out, indent, depth + 1)
        else:
            _write(item, out, indent, depth + 1)
    if indent is not None:
        out.append("\n" + " " * (indent * depth))
    out.append(close_ch)
