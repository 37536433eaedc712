"""Plain-text coefficient reports.

Grammar (one item per line)::

    #porohomog-report v1          first line, fixed
    # any text                    comment
    key = value                   scalar entry; keys are dotted words
    begin NAME ROWSxCOLS          numeric block
    v,v,...,v                     ROWS lines of COLS comma-separated numbers
    end NAME

Numbers use Python's shortest round-trip ``repr`` (at most 17
significant digits), so identical inputs give byte-identical files.
``inf``, ``-inf`` and ``nan`` are written as such.  Booleans are
``true``/``false``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

HEADER = "#porohomog-report v1"
_KEY = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_.\[\]-]*$")


class ReportError(ValueError):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def _parse_value(text: str):
    t = text.strip()
    if t == "true":
        return True
    if t == "false":
        return False
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


_COMBINED = ("command", "checks.failed")


def _combine(key: str, a, b) -> str:
    sep = "," if key == "checks.failed" else ";"
    items = []
    for v in (a, b):
        for part in str(v).split(sep):
            part = part.strip()
            if part and part not in items and part != "none":
                items.append(part)
    return (sep + " ").join(items) if items else "none"


@dataclass
class Report:
    entries: dict = field(default_factory=dict)
    blocks: dict = field(default_factory=dict)

    def set(self, key: str, value) -> None:
        if not _KEY.match(key):
            raise ReportError(f"invalid report key {key!r}")
        if isinstance(value, str) and "\n" in value:
            raise ReportError(f"value for {key!r} spans lines")
        self.entries[key] = value

    def block(self, name: str, values) -> None:
        if not _KEY.match(name):
            raise ReportError(f"invalid block name {name!r}")
        arr = np.atleast_2d(np.asarray(values, dtype=float))
        if arr.ndim != 2:
            raise ReportError(f"block {name!r} must be two-dimensional")
        self.blocks[name] = arr

    def merge(self, other: "Report", strict: bool = True) -> "Report":
        """Union of two reports.

        ``command`` and ``checks.failed`` describe the run rather than the
        coefficients, so they are combined.  Any other key or block present
        in both with different values is an error unless ``strict`` is off,
        in which case ``other`` wins.
        """
        out = Report(dict(self.entries), dict(self.blocks))
        for k, v in other.entries.items():
            if k in _COMBINED and k in out.entries:
                out.entries[k] = _combine(k, out.entries[k], v)
                continue
            if strict and k in out.entries and fmt(out.entries[k]) != fmt(v):
                raise ReportError(f"conflicting values for {k!r}")
            out.entries[k] = v
        for k, v in other.blocks.items():
            if strict and k in out.blocks and not np.array_equal(out.blocks[k], v):
                raise ReportError(f"conflicting block {k!r}")
            out.blocks[k] = v
        return out

    def to_text(self) -> str:
        lines = [HEADER]
        for k in self.entries:
            lines.append(f"{k} = {fmt(self.entries[k])}")
        for name, arr in self.blocks.items():
            lines.append(f"begin {name} {arr.shape[0]}x{arr.shape[1]}")
            for row in arr:
                lines.append(",".join(fmt(v) for v in row))
            lines.append(f"end {name}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())


def parse_report(text: str) -> Report:
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise ReportError("missing report header")
    rep = Report()
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line or line.startswith("#"):
            continue
        if line.startswith("begin "):
            parts = line.split()
            if len(parts) != 3 or "x" not in parts[2]:
                raise ReportError(f"bad block header on line {i}")
            name = parts[1]
            rows, cols = (int(v) for v in parts[2].split("x"))
            data = []
            for _ in range(rows):
                if i >= len(lines):
                    raise ReportError(f"block {name!r} is truncated")
                vals = [float(v) for v in lines[i].split(",")]
                if len(vals) != cols:
                    raise ReportError(f"block {name!r} row has {len(vals)} values, expected {cols}")
                data.append(vals)
                i += 1
            if i >= len(lines) or lines[i].strip() != f"end {name}":
                raise ReportError(f"block {name!r} is not terminated")
            i += 1
            rep.blocks[name] = np.array(data, dtype=float).reshape(rows, cols)
            continue
        if "=" not in line:
            raise ReportError(f"cannot parse line {i}: {line!r}")
        key, value = line.split("=", 1)
        rep.entries[key.strip()] = _parse_value(value)
    return rep


def read_report(path) -> Report:
    with open(path, encoding="utf-8") as fh:
        return parse_report(fh.read())


def kernel_columns(name: str, shape: tuple, labels=None) -> list:
    """``B11 .. B33`` for 3x3, ``A4_11_11 ..`` for labelled blocks, ``a2`` for scalars."""
    r, c = shape
    if r == c == 1:
        return [name]
    if labels is None:
        return [f"{name}{i + 1}{j + 1}" for i in range(r) for j in range(c)]
    return [f"{name}_{labels[i]}_{labels[j]}" for i in range(r) for j in range(c)]


def write_kernel_csv(path, name: str, kernel: list, labels=None) -> None:
    """Time series of matrices: ``t`` then the entries row by row."""
    if not kernel:
        raise ReportError(f"kernel {name!r} has no samples")
    shape = np.atleast_2d(np.asarray(kernel[0][1], dtype=float)).shape
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["t"] + kernel_columns(name, shape, labels)) + "\n")
        for t, M in kernel:
            vals = np.atleast_2d(np.asarray(M, dtype=float)).ravel()
            fh.write(",".join([fmt(float(t))] + [fmt(v) for v in vals]) + "\n")
