"""Strict CSV ingestion and serialization for manifests, tabulations, and
CVR files.

All three formats are UTF-8 CSV with a required header row:

    manifest:    batch_id,size
    tabulation:  batch_id,s_tab,w_tab,l_tab
    cvr:         row,identifier,w,l

batch_id and row must be contiguous and 1-based.  Identifiers in the
reserved auditor-internal namespace are rejected, as are tabulations that
declare a tie (those end in a runoff or a full hand count, not an audit).
Parse errors carry the offending line and column.
"""

from __future__ import annotations

import csv
import io
from typing import Sequence

from .model import CvrRow, CvrTable, Tabulation, is_reserved_identifier

__all__ = [
    "FormatError",
    "parse_manifest",
    "parse_tabulation",
    "parse_cvr",
    "serialize_manifest",
    "serialize_tabulation",
    "serialize_cvr",
]

MANIFEST_HEADER = ["batch_id", "size"]
TABULATION_HEADER = ["batch_id", "s_tab", "w_tab", "l_tab"]
CVR_HEADER = ["row", "identifier", "w", "l"]


class FormatError(ValueError):
    """Parse failure with a file location."""

    def __init__(self, message: str, line: int, column: str | None = None):
        location = f"line {line}" + (f", column {column!r}" if column else "")
        super().__init__(f"{message} ({location})")
        self.line = line
        self.column = column


def _decode(data: bytes | str) -> str:
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"not valid UTF-8: {exc}", line=0) from None
    return data


def _rows(text: str, header: list[str]):
    reader = csv.reader(io.StringIO(text))
    try:
        first = next(reader)
    except StopIteration:
        raise FormatError("missing header row", line=1) from None
    if first != header:
        raise FormatError(
            f"expected header {','.join(header)!r}, got {','.join(first)!r}", line=1
        )
    for number, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise FormatError(
                f"expected {len(header)} fields, got {len(row)}", line=number
            )
        yield number, row


def _int_field(value: str, line: int, column: str, minimum: int = 0) -> int:
    try:
        parsed = int(value)
    except ValueError:
        raise FormatError(f"not an integer: {value!r}", line, column) from None
    if parsed < minimum:
        raise FormatError(f"must be >= {minimum}, got {parsed}", line, column)
    return parsed


def _contiguous(expected: int, got: int, line: int, column: str) -> None:
    if got != expected:
        raise FormatError(f"expected {expected}, got {got}", line, column)


def parse_manifest(data: bytes | str) -> list[int]:
    sizes = []
    for line, row in _rows(_decode(data), MANIFEST_HEADER):
        _contiguous(len(sizes) + 1, _int_field(row[0], line, "batch_id", 1), line, "batch_id")
        sizes.append(_int_field(row[1], line, "size"))
    if not sizes:
        raise FormatError("manifest has no batches", line=1)
    return sizes


def parse_tabulation(data: bytes | str) -> Tabulation:
    rows = []
    for line, row in _rows(_decode(data), TABULATION_HEADER):
        _contiguous(len(rows) + 1, _int_field(row[0], line, "batch_id", 1), line, "batch_id")
        rows.append(
            (
                _int_field(row[1], line, "s_tab"),
                _int_field(row[2], line, "w_tab"),
                _int_field(row[3], line, "l_tab"),
            )
        )
    if not rows:
        raise FormatError("tabulation has no batches", line=1)
    tabulation = Tabulation(rows=tuple(rows))
    if tabulation.winner_total == tabulation.loser_total:
        raise FormatError(
            f"tabulation declares a tie ({tabulation.winner_total} votes each); "
            "tied contests are not auditable",
            line=1,
        )
    return tabulation


def parse_cvr(data: bytes | str, batch_index: int) -> CvrTable:
    rows = []
    for line, row in _rows(_decode(data), CVR_HEADER):
        _contiguous(len(rows) + 1, _int_field(row[0], line, "row", 1), line, "row")
        identifier = row[1]
        if is_reserved_identifier(identifier):
            raise FormatError(
                f"identifier {identifier!r} uses the reserved auditor namespace",
                line,
                "identifier",
            )
        w = _int_field(row[2], line, "w")
        l = _int_field(row[3], line, "l")
        if w > 1:
            raise FormatError(f"w must be 0 or 1, got {w}", line, "w")
        if l > 1:
            raise FormatError(f"l must be 0 or 1, got {l}", line, "l")
        rows.append(CvrRow(identifier, w, l))
    return CvrTable(batch_index=batch_index, rows=tuple(rows))


def _write(header: list[str], rows) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return out.getvalue()


def serialize_manifest(sizes: Sequence[int]) -> str:
    return _write(MANIFEST_HEADER, ((i + 1, s) for i, s in enumerate(sizes)))


def serialize_tabulation(tabulation: Tabulation) -> str:
    return _write(
        TABULATION_HEADER,
        ((i + 1, s, w, l) for i, (s, w, l) in enumerate(tabulation.rows)),
    )


def serialize_cvr(cvr: CvrTable) -> str:
    return _write(
        CVR_HEADER,
        ((i + 1, r.identifier, r.votes_w, r.votes_l) for i, r in enumerate(cvr.rows)),
    )
