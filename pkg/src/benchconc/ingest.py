"""Loading, validation and export of registry snapshot files.

Two on-disk formats are supported. ``csv`` is UTF-8, comma separated,
RFC-4180 quoted with LF line endings and a mandatory header whose columns
are fixed by the header templates in ``benchconc/schemas``. ``jsonl`` holds
one JSON object per line with the same field names; list-valued fields
(authors, modalities, affiliations) are JSON arrays there instead of
``;``-joined strings.

Benchmark affiliations live in a sidecar ``affiliations.csv`` for the CSV
format and inline under ``"affiliations"`` for JSON lines.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import re
from collections import defaultdict
from datetime import date
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence, TypeVar, Union

from .records import (
    LICENSE_CLASSES,
    UNKNOWN_COUNTRY,
    WEIGHTS_ACCESS,
    Affiliation,
    BenchmarkRecord,
    ModelRecord,
    SnapshotManifest,
)

PathLike = Union[str, Path]
FORMATS = ("csv", "jsonl")
MIN_RELEASE_DATE = date(2015, 1, 1)

_DATE_RE = re.compile(r"^(\d{4})(?:-(\d{2})(?:-(\d{2}))?)?$")
_TRUE = {"true", "1", "yes"}
_FALSE = {"false", "0", "no"}


class IngestError(ValueError):
    """Validation failure pinned to a file position."""

    def __init__(self, message: str, path: Optional[PathLike] = None,
                 row: Optional[int] = None, column: Optional[str] = None):
        self.path = str(path) if path is not None else None
        self.row = row
        self.column = column
        where = []
        if self.path:
            where.append(self.path)
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


def schema_columns(name: str) -> list[str]:
    """Column list of a shipped schema template (``models``, ``benchmarks``, ...)."""
    text = resources.files("benchconc").joinpath("schemas", f"{name}.csv").read_text("utf-8")
    return next(csv.reader([text.splitlines()[0]]))


MODEL_COLUMNS = schema_columns("models")
BENCHMARK_COLUMNS = schema_columns("benchmarks")
AFFILIATION_COLUMNS = schema_columns("affiliations")
ALIAS_COLUMNS = schema_columns("aliases")


def file_checksum(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# field parsers


class _Cursor:
    """Carries path/row so field parsers can report where they failed."""

    def __init__(self, path: PathLike, row: int, data: Mapping):
        self.path, self.row, self.data = path, row, data

    def fail(self, column: Optional[str], message: str) -> IngestError:
        return IngestError(message, self.path, self.row, column)

    def raw(self, column: str):
        value = self.data.get(column)
        return value.strip() if isinstance(value, str) else value

    def text(self, column: str, required: bool = True) -> str:
        value = self.raw(column)
        if value is None or value == "":
            if required:
                raise self.fail(column, "value is required")
            return ""
        if not isinstance(value, str):
            raise self.fail(column, f"expected a string, got {value!r}")
        return value

    def integer(self, column: str, optional: bool = False, positive: bool = False) -> Optional[int]:
        value = self.raw(column)
        if value is None or value == "":
            if optional:
                return None
            raise self.fail(column, "value is required")
        if isinstance(value, bool):
            raise self.fail(column, f"not an integer: {value!r}")
        if isinstance(value, int):
            number = value
        else:
            try:
                number = int(str(value))
            except ValueError:
                raise self.fail(column, f"not an integer: {value!r}") from None
        if number < 0 or (positive and number == 0):
            raise self.fail(column, f"must be {'positive' if positive else '>= 0'}, got {number}")
        return number

    def choice(self, column: str, options: Sequence[str], default: str) -> str:
        value = self.text(column, required=False) or default
        if value not in options:
            raise self.fail(column, f"expected one of {', '.join(options)}, got {value!r}")
        return value

    def boolean(self, column: str) -> bool:
        value = self.raw(column)
        if isinstance(value, bool):
            return value
        token = str(value or "").lower()
        if token in _TRUE:
            return True
        if token in _FALSE:
            return False
        raise self.fail(column, f"not a boolean: {value!r}")

    def labels(self, column: str) -> tuple[str, ...]:
        value = self.data.get(column)
        if value is None or value == "":
            return ()
        if isinstance(value, str):
            items = value.split(";")
        elif isinstance(value, list):
            items = value
        else:
            raise self.fail(column, f"expected a list, got {value!r}")
        out = []
        for item in items:
            if not isinstance(item, str):
                raise self.fail(column, f"list items must be strings, got {item!r}")
            item = item.strip()
            if item:
                out.append(item)
        return tuple(dict.fromkeys(out))

    def release_date(self, column: str, lo: date, hi: date) -> tuple[date, bool]:
        value = self.text(column)
        m = _DATE_RE.match(value)
        if not m:
            raise self.fail(column, f"unparseable date {value!r}")
        year, month, day = m.group(1), m.group(2), m.group(3)
        try:
            parsed = date(int(year), int(month or 1), int(day or 1))
        except ValueError:
            raise self.fail(column, f"invalid date {value!r}") from None
        if not lo <= parsed <= hi:
            raise self.fail(column, f"date {parsed.isoformat()} outside [{lo}, {hi}]")
        return parsed, day is None


# ---------------------------------------------------------------------------
# row iteration


def _iter_csv(path: PathLike, columns: Sequence[str]) -> Iterator[tuple[int, dict]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError("missing header row", path, 1) from None
        if header != list(columns):
            raise IngestError(
                f"header mismatch: expected {','.join(columns)!s}, got {','.join(header)!s}",
                path, 1,
            )
        for cells in reader:
            row = reader.line_num
            if not cells:
                continue
            if len(cells) != len(columns):
                raise IngestError(
                    f"expected {len(columns)} fields, got {len(cells)}", path, row
                )
            yield row, dict(zip(columns, cells))


def _iter_jsonl(path: PathLike, columns: Sequence[str],
                extra: Sequence[str] = ()) -> Iterator[tuple[int, dict]]:
    allowed = set(columns) | set(extra)
    with open(path, encoding="utf-8") as fh:
        for row, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"invalid JSON: {exc.msg}", path, row) from None
            if not isinstance(obj, dict):
                raise IngestError("expected a JSON object", path, row)
            unknown = sorted(set(obj) - allowed)
            if unknown:
                raise IngestError(f"unknown field {unknown[0]!r}", path, row, unknown[0])
            missing = [c for c in columns if c not in obj]
            if missing:
                raise IngestError("missing field", path, row, missing[0])
            yield row, obj


def _check_format(fmt: str) -> None:
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")


# ---------------------------------------------------------------------------
# loaders


def load_models(path: PathLike, fmt: str = "csv", *, snapshot_date: Optional[date] = None,
                min_date: date = MIN_RELEASE_DATE, source_label: Optional[str] = None,
                ) -> tuple[list[ModelRecord], SnapshotManifest]:
    """Parse a model snapshot; fails on the first invalid row."""
    _check_format(fmt)
    hi = snapshot_date or date.today()
    rows = _iter_csv(path, MODEL_COLUMNS) if fmt == "csv" else _iter_jsonl(path, MODEL_COLUMNS)
    records: list[ModelRecord] = []
    seen: dict[str, int] = {}
    imprecise: list[int] = []
    for row, data in rows:
        cur = _Cursor(path, row, data)
        rid = cur.text("id")
        if rid in seen:
            raise cur.fail("id", f"duplicate id {rid!r} (first seen at row {seen[rid]})")
        seen[rid] = row
        released, coarse = cur.release_date("release_date", min_date, hi)
        if coarse:
            imprecise.append(row)
        records.append(ModelRecord(
            id=rid,
            name=cur.text("name"),
            release_date=released,
            license_class=cur.choice("license_class", LICENSE_CLASSES, "unspecified"),
            weights_access=cur.choice("weights_access", WEIGHTS_ACCESS, "unspecified"),
            modalities=cur.labels("modalities"),
            parameter_count=cur.integer("parameter_count", optional=True, positive=True),
            documented=cur.boolean("documented"),
            manufacturer=cur.text("manufacturer", required=False),
            country=cur.text("country", required=False) or UNKNOWN_COUNTRY,
        ))
    manifest = SnapshotManifest(
        source_label=source_label or Path(path).name,
        snapshot_date=snapshot_date,
        record_count=len(records),
        checksum=file_checksum(path),
        imprecise_dates=tuple(imprecise),
    )
    return records, manifest


def _load_affiliations_csv(path: PathLike, known: Mapping[str, tuple[str, ...]],
                           ) -> dict[str, list[Affiliation]]:
    out: dict[str, list[Affiliation]] = defaultdict(list)
    for row, data in _iter_csv(path, AFFILIATION_COLUMNS):
        cur = _Cursor(path, row, data)
        out[_check_affiliation(cur, known, cur.text("benchmark_id"))].append(_affiliation(cur))
    return out


def _affiliation(cur: _Cursor) -> Affiliation:
    return Affiliation(
        author=cur.text("author"),
        institution=cur.text("institution"),
        country=cur.text("country", required=False) or UNKNOWN_COUNTRY,
    )


def _check_affiliation(cur: _Cursor, known: Mapping[str, tuple[str, ...]], bid: str) -> str:
    if bid not in known:
        raise cur.fail("benchmark_id", f"unknown benchmark id {bid!r}")
    authors = known[bid]
    author = cur.text("author")
    if authors and author not in authors:
        raise cur.fail("author", f"author {author!r} is not listed on benchmark {bid!r}")
    return bid


def load_benchmarks(path: PathLike, fmt: str = "csv", *,
                    affiliations_path: Optional[PathLike] = None,
                    snapshot_date: Optional[date] = None,
                    min_date: date = MIN_RELEASE_DATE,
                    source_label: Optional[str] = None,
                    ) -> tuple[list[BenchmarkRecord], SnapshotManifest]:
    """Parse a benchmark snapshot plus its affiliation triples.

    Benchmarks without any affiliation load normally; allocation later books
    them under the ``Unknown/unlisted`` entity.
    """
    _check_format(fmt)
    hi = snapshot_date or date.today()
    if fmt == "csv":
        rows = _iter_csv(path, BENCHMARK_COLUMNS)
    else:
        rows = _iter_jsonl(path, BENCHMARK_COLUMNS, extra=("affiliations",))
    parsed: list[tuple[_Cursor, dict]] = []
    seen: dict[str, int] = {}
    imprecise: list[int] = []
    inline: dict[str, list[Affiliation]] = {}
    for row, data in rows:
        cur = _Cursor(path, row, data)
        rid = cur.text("id")
        if rid in seen:
            raise cur.fail("id", f"duplicate id {rid!r} (first seen at row {seen[rid]})")
        seen[rid] = row
        released, coarse = cur.release_date("release_date", min_date, hi)
        if coarse:
            imprecise.append(row)
        fields = dict(
            id=rid,
            name=cur.text("name"),
            release_date=released,
            citations=cur.integer("citations"),
            stars=cur.integer("stars"),
            forks=cur.integer("forks", optional=True),
            watchers=cur.integer("watchers", optional=True),
            open_issues=cur.integer("open_issues", optional=True),
            sample_size=cur.integer("sample_size", optional=True, positive=True),
            category=cur.text("category", required=False),
            authors=cur.labels("authors"),
        )
        parsed.append((cur, fields))
        if fmt == "jsonl":
            affs = data.get("affiliations") or []
            if not isinstance(affs, list):
                raise cur.fail("affiliations", "expected a list of objects")
            known = {rid: fields["authors"]}
            items = []
            for item in affs:
                if not isinstance(item, dict):
                    raise cur.fail("affiliations", f"expected an object, got {item!r}")
                sub = _Cursor(path, row, item)
                _check_affiliation(sub, known, rid)
                items.append(_affiliation(sub))
            inline[rid] = items

    sidecar_sum = None
    if fmt == "csv":
        if affiliations_path is not None:
            known = {f["id"]: f["authors"] for _, f in parsed}
            inline = _load_affiliations_csv(affiliations_path, known)
            sidecar_sum = file_checksum(affiliations_path)
    records = []
    for cur, fields in parsed:
        try:
            records.append(BenchmarkRecord(affiliations=tuple(inline.get(fields["id"], ())),
                                           **fields))
        except ValueError as exc:
            raise cur.fail(None, str(exc)) from None
    manifest = SnapshotManifest(
        source_label=source_label or Path(path).name,
        snapshot_date=snapshot_date,
        record_count=len(records),
        checksum=file_checksum(path),
        imprecise_dates=tuple(imprecise),
        sidecar_checksum=sidecar_sum,
    )
    return records, manifest


# ---------------------------------------------------------------------------
# export


def _open_out(path: PathLike):
    return open(path, "w", newline="", encoding="utf-8")


def _opt(value) -> str:
    return "" if value is None else str(value)


def export_models(records: Iterable[ModelRecord], path: PathLike, fmt: str = "csv") -> None:
    _check_format(fmt)
    with _open_out(path) as fh:
        if fmt == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(MODEL_COLUMNS)
            for r in records:
                writer.writerow([
                    r.id, r.name, r.release_date.isoformat(), r.license_class,
                    r.weights_access, ";".join(r.modalities), _opt(r.parameter_count),
                    "true" if r.documented else "false", r.manufacturer, r.country,
                ])
        else:
            for r in records:
                obj = {
                    "id": r.id, "name": r.name, "release_date": r.release_date.isoformat(),
                    "license_class": r.license_class, "weights_access": r.weights_access,
                    "modalities": list(r.modalities), "parameter_count": r.parameter_count,
                    "documented": r.documented, "manufacturer": r.manufacturer,
                    "country": r.country,
                }
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def export_benchmarks(records: Iterable[BenchmarkRecord], path: PathLike, fmt: str = "csv",
                      affiliations_path: Optional[PathLike] = None) -> None:
    _check_format(fmt)
    records = list(records)
    with _open_out(path) as fh:
        if fmt == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(BENCHMARK_COLUMNS)
            for r in records:
                writer.writerow([
                    r.id, r.name, r.release_date.isoformat(), r.citations, r.stars,
                    _opt(r.forks), _opt(r.watchers), _opt(r.open_issues),
                    _opt(r.sample_size), r.category, ";".join(r.authors),
                ])
        else:
            for r in records:
                obj = {
                    "id": r.id, "name": r.name, "release_date": r.release_date.isoformat(),
                    "citations": r.citations, "stars": r.stars, "forks": r.forks,
                    "watchers": r.watchers, "open_issues": r.open_issues,
                    "sample_size": r.sample_size, "category": r.category,
                    "authors": list(r.authors),
                    "affiliations": [dataclasses.asdict(a) for a in r.affiliations],
                }
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
    if fmt == "csv" and affiliations_path is not None:
        with _open_out(affiliations_path) as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(AFFILIATION_COLUMNS)
            for r in records:
                for a in r.affiliations:
                    writer.writerow([r.id, a.author, a.institution, a.country])


# ---------------------------------------------------------------------------
# alias resolution


def load_aliases(path: PathLike) -> dict[str, str]:
    table: dict[str, str] = {}
    for row, data in _iter_csv(path, ALIAS_COLUMNS):
        cur = _Cursor(path, row, data)
        variant = cur.text("variant")
        if variant in table:
            raise cur.fail("variant", f"variant {variant!r} mapped twice")
        table[variant] = cur.text("canonical")
    return table


def resolve_aliases(aliases: Mapping[str, str]) -> dict[str, str]:
    """Collapse alias chains to their final canonical label; cycles are errors."""
    resolved: dict[str, str] = {}
    for start in aliases:
        path = [start]
        label = start
        while label in aliases and aliases[label] != label:
            label = aliases[label]
            if label in path:
                cycle = " -> ".join(path[path.index(label):] + [label])
                raise ValueError(f"alias cycle: {cycle}")
            path.append(label)
        resolved[start] = label
    return resolved


R = TypeVar("R", BenchmarkRecord, ModelRecord)


def dedupe_entities(records: Sequence[R], aliases: Optional[Mapping[str, str]] = None) -> list[R]:
    """Rewrite author, institution, country and manufacturer labels to canonical form."""
    table = resolve_aliases(aliases or {})
    if not table:
        return list(records)

    def canon(label: str) -> str:
        return table.get(label, label)

    out: list = []
    for r in records:
        if isinstance(r, BenchmarkRecord):
            affs = tuple(dict.fromkeys(
                Affiliation(canon(a.author), canon(a.institution), canon(a.country))
                for a in r.affiliations
            ))
            authors = tuple(dict.fromkeys(canon(a) for a in r.authors))
            out.append(dataclasses.replace(r, authors=authors, affiliations=affs))
        else:
            out.append(dataclasses.replace(
                r, manufacturer=canon(r.manufacturer), country=canon(r.country)))
    return out
