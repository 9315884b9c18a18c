"""Corpus ingestion: JSON-lines dataset records and row-sample previews."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

MAX_SAMPLED_VALUES = 10


class CorpusError(Exception):
    """Raised when a corpus file cannot be read or a record is invalid."""


@dataclass(frozen=True)
class ColumnSample:
    """A column name with up to 10 sampled cell values, in source row order."""

    name: str
    sampled_values: tuple[str, ...] = ()


@dataclass(frozen=True)
class RawDatasetRecord:
    """One table from the corpus with its collected metadata and row sample."""

    id: str
    title: str
    filename: str
    description: str
    tags: tuple[str, ...]
    size_bytes: int
    num_rows: int
    num_cols: int
    columns: tuple[ColumnSample, ...]
    usability_score: float | None = None
    downloads: int | None = None


@dataclass(frozen=True)
class PreviewTable:
    """Row-sample preview: header, up to 10 rows, and a markdown rendering."""

    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    rendered: str


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise CorpusError(message)


def _as_text(value: object, name: str) -> str:
    _require(isinstance(value, str), f"{name} must be a string")
    return value  # type: ignore[return-value]


def _as_count(value: object, name: str) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool) and value >= 0,
             f"{name} must be a non-negative integer")
    return value  # type: ignore[return-value]


def record_from_dict(obj: dict) -> RawDatasetRecord:
    """Validate one corpus entry and build a record.

    Raises CorpusError on any invariant violation (missing field, bad type,
    num_cols/columns mismatch, oversized value samples).
    """
    _require(isinstance(obj, dict), "entry must be a JSON object")
    for key in ("id", "title", "filename", "description", "tags",
                "size_bytes", "num_rows", "num_cols", "columns"):
        _require(key in obj, f"missing field {key!r}")

    rec_id = _as_text(obj["id"], "id")
    _require(bool(rec_id), "id must be nonempty")
    _require(not any(ord(ch) < 0x20 or ch == "\x7f" for ch in rec_id),
             "id must not contain control characters")

    tags_raw = obj["tags"]
    _require(isinstance(tags_raw, list) and all(isinstance(t, str) for t in tags_raw),
             "tags must be a list of strings")

    columns_raw = obj["columns"]
    _require(isinstance(columns_raw, list), "columns must be a list")
    columns = []
    for col in columns_raw:
        _require(isinstance(col, dict), "column must be an object")
        name = _as_text(col.get("name", ""), "column name")
        _require(bool(name), "column name must be nonempty")
        values = col.get("sampled_values", [])
        _require(isinstance(values, list) and all(isinstance(v, str) for v in values),
                 f"sampled_values of column {name!r} must be a list of strings")
        _require(len(values) <= MAX_SAMPLED_VALUES,
                 f"column {name!r} has more than {MAX_SAMPLED_VALUES} sampled values")
        columns.append(ColumnSample(name=name, sampled_values=tuple(values)))

    num_cols = _as_count(obj["num_cols"], "num_cols")
    _require(num_cols == len(columns),
             f"num_cols={num_cols} but {len(columns)} columns present")

    usability = obj.get("usability_score")
    if usability is not None:
        _require(isinstance(usability, (int, float)) and not isinstance(usability, bool)
                 and 0.0 <= float(usability) <= 1.0,
                 "usability_score must be in [0, 1]")
        usability = float(usability)

    downloads = obj.get("downloads")
    if downloads is not None:
        downloads = _as_count(downloads, "downloads")

    return RawDatasetRecord(
        id=rec_id,
        title=_as_text(obj["title"], "title"),
        filename=_as_text(obj["filename"], "filename"),
        description=_as_text(obj["description"], "description"),
        tags=tuple(tags_raw),
        size_bytes=_as_count(obj["size_bytes"], "size_bytes"),
        num_rows=_as_count(obj["num_rows"], "num_rows"),
        num_cols=num_cols,
        columns=tuple(columns),
        usability_score=usability,
        downloads=downloads,
    )


def record_to_dict(record: RawDatasetRecord) -> dict:
    """Serialize a record back to the corpus JSON shape."""
    out: dict = {
        "id": record.id,
        "title": record.title,
        "filename": record.filename,
        "description": record.description,
        "tags": list(record.tags),
        "size_bytes": record.size_bytes,
        "num_rows": record.num_rows,
        "num_cols": record.num_cols,
        "columns": [
            {"name": c.name, "sampled_values": list(c.sampled_values)}
            for c in record.columns
        ],
    }
    if record.usability_score is not None:
        out["usability_score"] = record.usability_score
    if record.downloads is not None:
        out["downloads"] = record.downloads
    return out


def load_corpus(path: str | Path) -> list[RawDatasetRecord]:
    """Load a JSON-lines corpus file, skipping invalid or duplicate entries.

    An unreadable path is fatal; malformed entries and duplicate ids are
    skipped with a diagnostic carrying the line number.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise CorpusError(f"cannot read corpus file {path}: {err}") from err

    records: list[RawDatasetRecord] = []
    seen: set[str] = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as err:
            logger.warning("corpus line %d: invalid JSON (%s), skipped", line_no, err)
            continue
        try:
            record = record_from_dict(obj)
        except CorpusError as err:
            logger.warning("corpus line %d: %s, skipped", line_no, err)
            continue
        if record.id in seen:
            logger.warning("corpus line %d: duplicate id %r, skipped", line_no, record.id)
            continue
        seen.add(record.id)
        records.append(record)
    return records


# Markdown cells are escaped so that rendering round-trips exactly even for
# values containing pipes, backslashes, or newlines.
_ESCAPES = [("\\", "\\\\"), ("|", "\\|"), ("\n", "\\n"), ("\r", "\\r")]


def _escape_cell(cell: str) -> str:
    for char, repl in _ESCAPES:
        cell = cell.replace(char, repl)
    return cell


def _unescape_cell(cell: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(cell):
        ch = cell[i]
        if ch == "\\" and i + 1 < len(cell):
            nxt = cell[i + 1]
            mapped = {"\\": "\\", "|": "|", "n": "\n", "r": "\r"}.get(nxt)
            if mapped is not None:
                out.append(mapped)
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def _render_row(cells: tuple[str, ...]) -> str:
    return "| " + " | ".join(_escape_cell(c) for c in cells) + " |"


def _split_row(line: str) -> tuple[str, ...]:
    # Split on unescaped pipes; the outermost pipes delimit the row.
    cells: list[str] = []
    current: list[str] = []
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == "\\" and i + 1 < len(line):
            current.append(ch)
            current.append(line[i + 1])
            i += 2
            continue
        if ch == "|":
            cells.append("".join(current))
            current = []
        else:
            current.append(ch)
        i += 1
    cells.append("".join(current))
    # Drop the text before the first and after the last delimiter.
    inner = cells[1:-1]
    out = []
    for cell in inner:
        if cell.startswith(" "):
            cell = cell[1:]
        if cell.endswith(" "):
            cell = cell[:-1]
        out.append(_unescape_cell(cell))
    return tuple(out)


def render_markdown_table(header: tuple[str, ...], rows: tuple[tuple[str, ...], ...]) -> str:
    if not header:
        return ""
    lines = [_render_row(header), "| " + " | ".join("---" for _ in header) + " |"]
    lines.extend(_render_row(row) for row in rows)
    return "\n".join(lines)


def parse_markdown_table(text: str) -> tuple[tuple[str, ...], tuple[tuple[str, ...], ...]]:
    """Parse a table produced by render_markdown_table back into header and rows."""
    if not text.strip():
        return (), ()
    lines = text.splitlines()
    header = _split_row(lines[0])
    rows = tuple(_split_row(line) for line in lines[2:])
    return header, rows


def make_preview(record: RawDatasetRecord, max_rows: int = 10) -> PreviewTable:
    """Build the row-sample preview table for a record.

    Rows align sampled values by column position; shorter columns are padded
    with empty cells so the table stays rectangular.
    """
    header = tuple(c.name for c in record.columns)
    if not header:
        return PreviewTable(header=(), rows=(), rendered="")
    available = max(len(c.sampled_values) for c in record.columns)
    n_rows = max(0, min(max_rows, available))
    rows = tuple(
        tuple(
            c.sampled_values[i] if i < len(c.sampled_values) else ""
            for c in record.columns
        )
        for i in range(n_rows)
    )
    return PreviewTable(header=header, rows=rows,
                        rendered=render_markdown_table(header, rows))
