"""CSV result tables with a commented metadata header."""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Sequence


def format_value(value: Any) -> str:
    if value is None:
        return "nan"
    if isinstance(value, (bool,)) or type(value).__name__ == "bool_":
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float) or hasattr(value, "dtype"):
        v = float(value)
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(value)


def reproducible_timestamp() -> str:
    """``SOURCE_DATE_EPOCH`` as UTC ISO time, or ``unset`` so identical runs stay byte-identical."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None:
        return "unset"
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class ResultTable:
    columns: list[tuple[str, str]]
    rows: list[list] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return [c for c, _ in self.columns]

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values for {len(self.columns)} columns")
        self.rows.append(list(values))

    def add_dict(self, row: dict) -> None:
        missing = set(self.names) - set(row)
        if missing:
            raise ValueError(f"row lacks columns {sorted(missing)}")
        self.add(*(row[n] for n in self.names))

    def column(self, name: str) -> list:
        i = self.names.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, value in self.metadata.items():
            buf.write(f"# {key}: {format_value(value)}\n")
        buf.write("# units: " + ",".join(u or "-" for _, u in self.columns) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.names)
        for r in self.rows:
            writer.writerow([format_value(v) for v in r])
        return buf.getvalue()

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


def read_csv(path_or_text: str) -> tuple[dict[str, str], list[str], list[list[str]]]:
    """Parse a table written by ``ResultTable.to_csv``: (metadata, header, rows as strings)."""
    text = path_or_text
    if "\n" not in path_or_text and os.path.exists(path_or_text):
        with open(path_or_text, encoding="utf-8") as fh:
            text = fh.read()
    meta: dict[str, str] = {}
    body: list[str] = []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            meta[key] = value
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]


def table_from(columns: Sequence[tuple[str, str]], **metadata) -> ResultTable:
    return ResultTable(list(columns), [], dict(metadata))
