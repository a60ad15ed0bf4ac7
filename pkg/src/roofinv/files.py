"""CSV and hashing helpers shared by pipeline stages.

Stage outputs may carry leading ``#`` comment lines (the run-manifest
stamp); parsers skip them. Comments are only honored at the top of a
file so quoted field data can never be mistaken for one.
"""

from __future__ import annotations

import csv
import hashlib
import io
from pathlib import Path
from typing import Iterable, Sequence

from .errors import MissingInputError, ValidationError


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    p = Path(path)
    if not p.is_file():
        raise MissingInputError(f"input file not found: {p}")
    return sha256_bytes(p.read_bytes())


def read_text(path: str | Path) -> str:
    p = Path(path)
    if not p.is_file():
        raise MissingInputError(f"input file not found: {p}")
    try:
        return p.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ValidationError(f"{p}: not valid UTF-8 ({exc})") from None


def read_csv_table(path: str | Path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Read a headered CSV, returning (header, [(line_number, row), ...]).

    Line numbers are physical 1-based line numbers in the file, so they
    stay meaningful in rejection reports even with comment lines present.
    """
    text = read_text(path)
    lines = text.splitlines()
    start = 0
    while start < len(lines) and (not lines[start].strip() or lines[start].startswith("#")):
        start += 1
    if start >= len(lines):
        raise ValidationError(f"{path}: no header row found")
    header = next(csv.reader(io.StringIO(lines[start])))
    rows: list[tuple[int, list[str]]] = []
    for offset, line in enumerate(lines[start + 1 :]):
        if not line.strip():
            continue
        row = next(csv.reader(io.StringIO(line)))
        rows.append((start + 2 + offset, row))
    return header, rows


def read_comments(path: str | Path) -> list[str]:
    """Return the leading ``#`` comment lines of a file, markers stripped."""
    comments = []
    for line in read_text(path).splitlines():
        if not line.strip():
            continue
        if not line.startswith("#"):
            break
        comments.append(line[1:].strip())
    return comments


def parse_keyvalue(lines: Iterable[str]) -> dict[str, str]:
    """Parse flat ``key=value`` lines; blanks and ``#`` comments ignored."""
    out: dict[str, str] = {}
    for i, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"line {i}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def write_csv(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence[object]],
    comments: Sequence[str] = (),
) -> None:
    """Write a CSV with optional leading ``# `` comment lines."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    for comment in comments:
        buf.write(f"# {comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    p.write_text(buf.getvalue(), encoding="utf-8")
