"""CSV output: RFC-4180 quoting, CRLF rows, 17 significant digits."""
from __future__ import annotations

import csv
import io
from pathlib import Path

__all__ = ["fmt_float", "csv_text", "write_csv"]


def fmt_float(x) -> str:
    x = float(x)
    if x == 0.0:
        x = 0.0  # drop the sign of negative zero
    return format(x, ".17g")


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool,)):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if v is None:
        return ""
    return fmt_float(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    Path(path).write_bytes(csv_text(header, rows).encode("utf-8"))
