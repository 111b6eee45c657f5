"""Atomic file output and the versioned CSV format.

Every artifact is written to a temporary file in the destination
directory and moved into place with ``os.replace``, so readers never see
a half-written file. CSV files carry a leading schema comment:

    # notbary-csv schema=history version=1
    epoch,v_f,v_t_1,v_t_2,wall_ms
    ...
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Tuple

from ..errors import IOErrorApp

CSV_MAGIC = "# notbary-csv"


def atomic_write_bytes(path: str | Path, data: bytes) -> Path:
    """Write bytes to ``path`` atomically (temp file + rename)."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target


def atomic_write_text(path: str | Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: str | Path, payload: Any) -> Path:
    """Write ``payload`` as indented, key-sorted JSON."""
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_csv(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    *,
    schema: str,
    version: int = 1,
) -> Path:
    """Write a versioned CSV file atomically.

    Floats are written with ``repr`` so values survive a round trip
    bit-exactly.
    """
    buf = io.StringIO()
    buf.write(f"{CSV_MAGIC} schema={schema} version={version}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return atomic_write_text(path, buf.getvalue())


def read_csv(path: str | Path) -> Tuple[Optional[str], List[str], List[List[str]]]:
    """Read a CSV written by `write_csv` or a plain header-first CSV.

    Returns:
        ``(schema_line, header, rows)``; ``schema_line`` is None for plain files.

    Raises:
        IOErrorApp: If the file is missing, unreadable or has no header row.
    """
    p = Path(path)
    try:
        lines = p.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IOErrorApp(f"CSV file not readable: {p}", {"path": str(p)}) from exc

    schema_line = None
    body = []
    for line in lines:
        if line.startswith("#"):
            if schema_line is None and line.startswith(CSV_MAGIC):
                schema_line = line
            continue
        if line.strip():
            body.append(line)
    if not body:
        raise IOErrorApp(f"CSV file has no header row: {p}", {"path": str(p)})
    parsed = list(csv.reader(body))
    return schema_line, parsed[0], parsed[1:]
