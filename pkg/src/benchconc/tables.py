"""Deterministic CSV/JSON table output."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Sequence, Union

TABLE_FORMATS = ("csv", "json")


def _cell(value: Any) -> Any:
    # repr() is the shortest round-tripping form, so reruns are byte-identical
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item"):  # numpy scalar
        return _cell(value.item())
    return value


def _plain(value: Any) -> Any:
    return value.item() if hasattr(value, "item") else value


def table_path(out_dir: Union[str, Path], stem: str, fmt: str = "csv") -> Path:
    return Path(out_dir) / f"{stem}.{fmt}"


def write_table(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]],
                fmt: str = "csv") -> Path:
    if fmt not in TABLE_FORMATS:
        raise ValueError(f"table format must be one of {TABLE_FORMATS}, got {fmt!r}")
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if fmt == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        else:
            records = [dict(zip(header, (_plain(v) for v in row))) for row in rows]
            json.dump(records, fh, indent=1, ensure_ascii=False)
            fh.write("\n")
    return path
