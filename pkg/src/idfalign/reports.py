"""CSV report helpers.

All numbers are written with `repr`, so reading a report back recovers every
value at full precision and rerunning a seeded command reproduces the file
byte for byte (wall-clock fields excepted, by construction of the commands
that emit them).
"""
from __future__ import annotations

import csv
import io
from pathlib import Path


def format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, header: list[str], rows: list[list]) -> None:
    Path(path).write_text(render_csv(header, rows))


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def stage_tree_table(tree_counts: list[int], errors_by_count: dict[int, list[float]]) -> tuple[list[str], list[list]]:
    """Rows = stages, columns = tree counts (the classic comparison-table shape)."""
    header = ["stage"] + [f"trees_{t}" for t in tree_counts]
    n_stages = len(next(iter(errors_by_count.values())))
    rows = []
    for stage in range(n_stages):
        rows.append([stage + 1] + [errors_by_count[t][stage] for t in tree_counts])
    return header, rows
