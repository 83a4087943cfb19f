"""Matrix CSV files, PGM heatmaps and JSON helpers.

Matrix CSV: one row per line, comma-separated, numbers written with
``repr(float)`` so that reading a file back gives the identical doubles. An
optional first line ``# rows=N cols=M`` is checked against the data.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

_HEADER = re.compile(r"#\s*rows=(\d+)\s+cols=(\d+)\s*$")


class MatrixFormatError(ValueError):
    def __init__(self, path, line: int | None, reason: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {reason}")
        self.path = path
        self.line = line


def format_matrix(x, header: bool = True) -> str:
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError(f"can only write 1-D or 2-D arrays, got shape {x.shape}")
    lines = [f"# rows={x.shape[0]} cols={x.shape[1]}"] if header else []
    integral = np.issubdtype(x.dtype, np.integer)
    for row in x:
        lines.append(",".join(str(int(v)) if integral else repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_matrix(path, x, header: bool = True) -> None:
    Path(path).write_text(format_matrix(x, header))


def parse_matrix(text: str, path="<string>") -> np.ndarray:
    rows: list[list[float]] = []
    expected = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            match = _HEADER.match(line)
            if match is None or rows or expected is not None:
                raise MatrixFormatError(path, lineno, f"unexpected comment line {line!r}")
            expected = (int(match.group(1)), int(match.group(2)))
            continue
        try:
            values = [float(tok) for tok in line.split(",")]
        except ValueError:
            raise MatrixFormatError(path, lineno, f"non-numeric entry in {line!r}") from None
        if rows and len(values) != len(rows[0]):
            raise MatrixFormatError(path, lineno, f"ragged row: {len(values)} columns, expected {len(rows[0])}")
        rows.append(values)
    if not rows:
        raise MatrixFormatError(path, None, "no data rows")
    x = np.array(rows, dtype=np.float64)
    if expected is not None and x.shape != expected:
        raise MatrixFormatError(path, 1, f"header says {expected[0]}x{expected[1]} but data is {x.shape[0]}x{x.shape[1]}")
    return x


def read_matrix(path) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MatrixFormatError(path, None, exc.strerror or str(exc)) from None
    return parse_matrix(text, path)


def pgm_bytes(x) -> bytes:
    """8-bit binary graymap, one pixel per matrix entry, 255 = probability 1."""
    x = np.asarray(x, dtype=np.float64)
    pixels = np.clip(np.rint(255.0 * x), 0, 255).astype(np.uint8)
    height, width = pixels.shape
    return f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes()


def write_pgm(path, x) -> None:
    Path(path).write_bytes(pgm_bytes(x))


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5" or len(parts) < 4:
        raise ValueError(f"{path}: not a binary PGM file")
    width, height = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(height, width)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
