"""CSV emission with a reproducibility header.

Dialect: comma separated, '.' decimal point, '#'-prefixed comment lines above
the header row. Floats are written with repr (shortest round-trip, at least 17
significant digits where needed), so a rerun with identical inputs produces a
byte-identical file.
"""

from __future__ import annotations

import csv
from pathlib import Path

from . import __version__


def format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return str(int(value))
    return str(value)


def write_csv(
    path: str | Path,
    comments: list[str],
    header: list[str],
    rows: list[list],
) -> None:
    """Write rows under '#' comments; version is always echoed first."""
    with open(path, "w", newline="") as handle:
        handle.write(f"# stratmask {__version__}\n")
        for line in comments:
            handle.write(f"# {line}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
