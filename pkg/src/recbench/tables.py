"""Typed delimited table files.

Every task input arrives as one of six suffix-identified text files:

========  =========================================================
suffix    content
========  =========================================================
.inter    user-item interaction rows (mandatory for every task)
.user     user profile features, one row per user
.item     item features, one row per item
.kg       head/tail/relation triplets over a knowledge graph
.link     item-to-entity correspondence pairs
.net      user-user edges with an optional float weight
========  =========================================================

All six share one layout: line 1 declares ``name:type`` for every field,
each following line carries one record, fields separated by a single
configurable character (comma by default), ``\\n`` line endings, UTF-8.
Four field types exist: ``token`` (a discrete value kept verbatim as a
string), ``token_seq`` (space-separated tokens), ``float`` and
``float_seq`` (space-separated floats).  An empty cell encodes a missing
value.  Cells must not contain the separator character; there is no
quoting or escaping dialect.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import TableFileError

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class FieldType(str, Enum):
    TOKEN = "token"
    TOKEN_SEQ = "token_seq"
    FLOAT = "float"
    FLOAT_SEQ = "float_seq"

    @property
    def is_token(self):
        return self in (FieldType.TOKEN, FieldType.TOKEN_SEQ)

    @property
    def is_seq(self):
        return self in (FieldType.TOKEN_SEQ, FieldType.FLOAT_SEQ)


class TableKind(str, Enum):
    INTER = "inter"
    USER = "user"
    ITEM = "item"
    KG = "kg"
    LINK = "link"
    NET = "net"

    @property
    def suffix(self):
        return "." + self.value


@dataclass(frozen=True)
class FieldSpec:
    """A named, typed column declaration."""

    name: str
    ftype: FieldType

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise TableFileError(f"invalid field name {self.name!r}")


class DataTable:
    """An ordered collection of named typed columns parsed from one file.

    Column storage depends on the field type:

    * ``token``      list of ``str`` (``None`` = missing), or an int64
      array once the table has been ID-encoded
    * ``token_seq``  list of ``tuple[str, ...]`` (``None`` = missing), or
      a list of int64 arrays once encoded
    * ``float``      float64 array, NaN = missing
    * ``float_seq``  list of float64 arrays (``None`` = missing)

    Tables are immutable by convention: every transformation returns a new
    table and shares unmodified columns.
    """

    def __init__(self, kind, fields, columns):
        self.kind = TableKind(kind)
        self.fields = tuple(fields)
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise TableFileError(f"duplicate field name in {names}")
        if set(columns) != set(names):
            raise TableFileError("columns do not match the declared fields")
        self.columns = dict(columns)
        lengths = {len(columns[n]) for n in names} or {0}
        if len(lengths) != 1:
            raise TableFileError(f"ragged columns: lengths {sorted(lengths)}")
        self.row_count = lengths.pop()
        _validate_kind_shape(self)

    def field(self, name) -> FieldSpec:
        for f in self.fields:
            if f.name == name:
                return f
        raise TableFileError(f"unknown field {name!r}")

    def has_field(self, name):
        return any(f.name == name for f in self.fields)

    @property
    def field_names(self):
        return [f.name for f in self.fields]

    def select_rows(self, indices) -> "DataTable":
        """New table keeping only ``indices``, in the given order."""
        indices = np.asarray(indices, dtype=np.intp)
        cols = {}
        for f in self.fields:
            col = self.columns[f.name]
            if isinstance(col, np.ndarray):
                cols[f.name] = col[indices]
            else:
                cols[f.name] = [col[i] for i in indices]
        return DataTable(self.kind, self.fields, cols)

    def replace_column(self, name, column) -> "DataTable":
        self.field(name)
        cols = dict(self.columns)
        cols[name] = column
        return DataTable(self.kind, self.fields, cols)

    def append_field(self, spec: FieldSpec, column) -> "DataTable":
        if self.has_field(spec.name):
            return self.replace_column(spec.name, column)
        return DataTable(self.kind, self.fields + (spec,), {**self.columns, spec.name: column})

    def __len__(self):
        return self.row_count

    def __eq__(self, other):
        if not isinstance(other, DataTable):
            return NotImplemented
        if self.kind != other.kind or self.fields != other.fields:
            return False
        if self.row_count != other.row_count:
            return False
        for f in self.fields:
            if not _columns_equal(self.columns[f.name], other.columns[f.name]):
                return False
        return True

    def __repr__(self):
        return (f"DataTable(kind={self.kind.value!r}, rows={self.row_count}, "
                f"fields={[f'{f.name}:{f.ftype.value}' for f in self.fields]})")


def _columns_equal(a, b):
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        a, b = np.asarray(a), np.asarray(b)
        if a.shape != b.shape:
            return False
        if a.dtype.kind == "f" or b.dtype.kind == "f":
            return bool(np.all((a == b) | (np.isnan(a) & np.isnan(b))))
        return bool(np.all(a == b))
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        if x is None or y is None:
            if x is not y:
                return False
        elif isinstance(x, np.ndarray) or isinstance(y, np.ndarray):
            if not _columns_equal(x, y):
                return False
        elif x != y:
            return False
    return True


def _validate_kind_shape(table: DataTable):
    """Enforce the per-kind field-layout rules (positional for kg/link/net)."""
    kind, fields = table.kind, table.fields
    if kind == TableKind.KG:
        if len(fields) != 3 or any(f.ftype != FieldType.TOKEN for f in fields):
            raise TableFileError(
                ".kg files must have exactly three token fields (head, tail, relation)")
    elif kind == TableKind.LINK:
        if len(fields) != 2 or any(f.ftype != FieldType.TOKEN for f in fields):
            raise TableFileError(
                ".link files must have exactly two token fields (item, entity)")
    elif kind == TableKind.NET:
        ok = (len(fields) in (2, 3)
              and fields[0].ftype == FieldType.TOKEN
              and fields[1].ftype == FieldType.TOKEN
              and (len(fields) == 2 or fields[2].ftype == FieldType.FLOAT))
        if not ok:
            raise TableFileError(
                ".net files must be (source token, target token[, weight float])")
    elif kind == TableKind.INTER:
        if sum(f.ftype == FieldType.TOKEN for f in fields) < 2:
            raise TableFileError(
                ".inter files need at least two token fields (user ID, item ID)")
    elif kind in (TableKind.USER, TableKind.ITEM):
        if not fields or fields[0].ftype != FieldType.TOKEN:
            raise TableFileError(
                f".{kind.value} files must start with a token ID field")


def _check_separator(sep):
    if len(sep) != 1:
        raise TableFileError(f"separator must be a single character, got {sep!r}")
    if sep in {":", " ", "\n", "\r"}:
        raise TableFileError(f"separator {sep!r} collides with the file syntax")


def _parse_header(line, sep, where):
    parts = line.split(sep)
    fields = []
    for part in parts:
        name, colon, tag = part.rpartition(":")
        if not colon or not name:
            raise TableFileError(f"{where}: malformed header entry {part!r} "
                                 "(expected name:type)")
        try:
            ftype = FieldType(tag)
        except ValueError:
            raise TableFileError(f"{where}: unknown type tag {tag!r} in {part!r}") from None
        try:
            fields.append(FieldSpec(name, ftype))
        except TableFileError as exc:
            raise TableFileError(f"{where}: {exc}") from None
    names = [f.name for f in fields]
    if len(set(names)) != len(names):
        raise TableFileError(f"{where}: duplicate field name in header")
    return fields


def _parse_float(text, where):
    try:
        value = float(text)
    except ValueError:
        raise TableFileError(f"{where}: non-numeric value {text!r} in a float field") from None
    if math.isinf(value):
        raise TableFileError(f"{where}: non-finite value {text!r} in a float field")
    return value  # NaN text is accepted and treated as missing


def _parse_cell(text, ftype, where):
    if text == "":
        if ftype == FieldType.FLOAT:
            return math.nan
        return None
    if ftype == FieldType.TOKEN:
        return text
    if ftype == FieldType.TOKEN_SEQ:
        return tuple(text.split())
    if ftype == FieldType.FLOAT:
        return _parse_float(text, where)
    return np.array([_parse_float(t, where) for t in text.split()], dtype=np.float64)


def read_table(path, kind, sep=",") -> DataTable:
    """Parse one table file into a :class:`DataTable`.

    Raises :class:`TableFileError` for a malformed header, an unknown type
    tag, a row with the wrong field count (the message names the line), or
    non-numeric text in a float field.  Row order is preserved; missing
    cells become explicit missing markers.
    """
    _check_separator(sep)
    kind = TableKind(kind)
    try:
        with open(path, encoding="utf-8", newline="") as handle:
            raw = handle.read()
    except OSError as exc:
        raise TableFileError(f"cannot read {path}: {exc}") from None
    lines = raw.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise TableFileError(f"{path}: empty file, missing header")
    fields = _parse_header(lines[0].rstrip("\r"), sep, f"{path}:1")
    data: dict[str, list] = {f.name: [] for f in fields}
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.rstrip("\r").split(sep)
        if len(cells) != len(fields):
            raise TableFileError(
                f"{path}:{lineno}: expected {len(fields)} fields, got {len(cells)}")
        for f, cell in zip(fields, cells):
            data[f.name].append(_parse_cell(cell, f.ftype, f"{path}:{lineno} field {f.name!r}"))
    columns = {}
    for f in fields:
        if f.ftype == FieldType.FLOAT:
            columns[f.name] = np.array(data[f.name], dtype=np.float64)
        else:
            columns[f.name] = data[f.name]
    return DataTable(kind, fields, columns)


def _format_float(value):
    if isinstance(value, float) and math.isnan(value):
        return ""
    if math.isinf(value):
        raise TableFileError("cannot write a non-finite float")
    return repr(float(value))


def _format_cell(value, ftype, sep, where):
    if value is None:
        return ""
    if ftype == FieldType.TOKEN:
        text = str(value)
        if sep in text or "\n" in text or "\r" in text:
            raise TableFileError(f"{where}: token {text!r} contains the separator "
                                 "or a newline; cells cannot be escaped")
        return text
    if ftype == FieldType.TOKEN_SEQ:
        parts = [str(v) for v in value]
        for part in parts:
            if not part or sep in part or " " in part or "\n" in part or "\r" in part:
                raise TableFileError(f"{where}: sequence element {part!r} is empty or "
                                     "contains a delimiter")
        return " ".join(parts)
    if ftype == FieldType.FLOAT:
        return _format_float(float(value))
    return " ".join(_format_float(float(v)) for v in value)


def write_table(table: DataTable, path, sep=","):
    """Write ``table`` so that :func:`read_table` reproduces it exactly.

    Floats are written with round-trip-safe precision (``repr``); missing
    values become empty cells.
    """
    _check_separator(sep)
    lines = [sep.join(f"{f.name}:{f.ftype.value}" for f in table.fields)]
    for i in range(table.row_count):
        cells = []
        for f in table.fields:
            value = table.columns[f.name][i]
            cells.append(_format_cell(value, f.ftype, sep, f"row {i} field {f.name!r}"))
        lines.append(sep.join(cells))
    try:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise TableFileError(f"cannot write {path}: {exc}") from None


def convert_csv(path, mapping, kind, delimiter=",") -> DataTable:
    """Convert a delimited text file with a header into a :class:`DataTable`.

    ``mapping`` assigns source columns to table fields:
    ``{"userId": ("user_id", FieldType.TOKEN), ...}``.  Unmapped source
    columns are dropped.  Coercion failures name the offending row and
    field.
    """
    kind = TableKind(kind)
    try:
        with open(path, encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle, delimiter=delimiter)
            rows = list(reader)
    except OSError as exc:
        raise TableFileError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise TableFileError(f"{path}: empty file, missing header")
    header = rows[0]
    positions = {}
    fields = []
    for src, (dst, ftype) in mapping.items():
        if src not in header:
            raise TableFileError(f"{path}: source column {src!r} not found "
                                 f"(header has {header})")
        positions[dst] = header.index(src)
        fields.append(FieldSpec(dst, FieldType(ftype)))
    data: dict[str, list] = {f.name: [] for f in fields}
    for lineno, row in enumerate(rows[1:], start=2):
        for f in fields:
            pos = positions[f.name]
            cell = row[pos].strip() if pos < len(row) else ""
            data[f.name].append(
                _parse_cell(cell, f.ftype, f"{path}:{lineno} field {f.name!r}"))
    columns = {}
    for f in fields:
        if f.ftype == FieldType.FLOAT:
            columns[f.name] = np.array(data[f.name], dtype=np.float64)
        else:
            columns[f.name] = data[f.name]
    return DataTable(kind, fields, columns)
