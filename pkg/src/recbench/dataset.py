"""Dataset assembly and preprocessing.

A :class:`Dataset` bundles the interaction table with optional feature,
graph, and social tables, validates them against each other, and carries
the vocabularies produced by ID remapping.  Datasets are immutable: every
preprocessing function returns a new instance and shares the columns it
did not touch.

The canonical preprocessing order used by the runner is: row filters (in
config order) -> remap_ids -> fill_nan -> set_label_by_threshold ->
normalize.  Filters never re-remap IDs; remapping is a separate explicit
step so filtered-out entities do not occupy vocabulary slots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError
from .tables import DataTable, FieldSpec, FieldType, TableKind

PAD_ID = 0
PAD_TOKEN = "[PAD]"


class Vocabulary:
    """Bijection between raw tokens and contiguous internal IDs.

    ID 0 is reserved for the padding/unknown token; real tokens get IDs
    1..size-1 in first-occurrence order.
    """

    def __init__(self, field_name, tokens):
        self.field = field_name
        self.id_of = {}
        self.token_of = [PAD_TOKEN]
        for tok in tokens:
            if tok is not None and tok not in self.id_of:
                self.id_of[tok] = len(self.token_of)
                self.token_of.append(tok)

    @property
    def size(self):
        """Number of IDs including the reserved padding slot."""
        return len(self.token_of)

    def encode(self, token):
        return PAD_ID if token is None else self.id_of[token]

    def decode(self, idx):
        return self.token_of[idx]

    def __repr__(self):
        return f"Vocabulary(field={self.field!r}, size={self.size})"


@dataclass(frozen=True)
class Dataset:
    """Validated tables plus vocabularies; immutable after build."""

    inter: DataTable
    user_feat: DataTable | None = None
    item_feat: DataTable | None = None
    kg: DataTable | None = None
    link: DataTable | None = None
    net: DataTable | None = None
    user_field: str = "user_id"
    item_field: str = "item_id"
    vocabs: dict = field(default_factory=dict)
    encoded: bool = False

    @classmethod
    def build(cls, inter, user_feat=None, item_feat=None, kg=None, link=None,
              net=None, user_field="user_id", item_field="item_id") -> "Dataset":
        if inter.kind != TableKind.INTER:
            raise DataError(f"interaction table has kind {inter.kind.value!r}")
        for name in (user_field, item_field):
            if not inter.has_field(name):
                raise DataError(f"interaction table lacks the {name!r} field")
            if inter.field(name).ftype != FieldType.TOKEN:
                raise DataError(f"field {name!r} must be a token field")
        if user_feat is not None and not user_feat.has_field(user_field):
            raise DataError(f"user table lacks the {user_field!r} field")
        if item_feat is not None and not item_feat.has_field(item_field):
            raise DataError(f"item table lacks the {item_field!r} field")
        return cls(inter, user_feat, item_feat, kg, link, net, user_field, item_field)

    @property
    def tables(self):
        named = [("inter", self.inter), ("user_feat", self.user_feat),
                 ("item_feat", self.item_feat), ("kg", self.kg),
                 ("link", self.link), ("net", self.net)]
        return [(name, t) for name, t in named if t is not None]

    @property
    def n_users(self):
        self._require_encoded()
        return self.vocabs[self.user_field].size

    @property
    def n_items(self):
        self._require_encoded()
        return self.vocabs[self.item_field].size

    def _require_encoded(self):
        if not self.encoded:
            raise DataError("dataset is not ID-encoded yet; call remap_ids")

    def user_ids(self):
        self._require_encoded()
        return self.inter.columns[self.user_field]

    def item_ids(self):
        self._require_encoded()
        return self.inter.columns[self.item_field]

    def find_field(self, name):
        """Locate ``name`` across tables; returns (table attr, FieldSpec)."""
        for attr, table in self.tables:
            if table.has_field(name):
                return attr, table.field(name)
        raise DataError(f"unknown field {name!r}")


# ---------------------------------------------------------------------------
# row filtering


def _factorize(column):
    """Map a token column (raw or encoded) to dense codes 0..n-1."""
    if isinstance(column, np.ndarray):
        uniq, codes = np.unique(column, return_inverse=True)
        return codes, len(uniq)
    seen = {}
    codes = np.empty(len(column), dtype=np.int64)
    for i, tok in enumerate(column):
        codes[i] = seen.setdefault(tok, len(seen))
    return codes, len(seen)


def filter_by_inter_num(ds: Dataset, min_user=0, min_item=0) -> Dataset:
    """Drop users/items with too few interactions, iterated to a fixpoint.

    Alternates user and item removal until every remaining user has at
    least ``min_user`` rows and every remaining item at least ``min_item``
    rows (k-core semantics).  Relative row order is preserved.  Feature
    tables are untouched: entities that only appear there keep their rows.
    """
    if min_user < 0 or min_item < 0:
        raise DataError("interaction-count thresholds must be >= 0")
    u_codes, _ = _factorize(ds.inter.columns[ds.user_field])
    i_codes, _ = _factorize(ds.inter.columns[ds.item_field])
    keep = np.ones(len(ds.inter), dtype=bool)
    changed = True
    while changed:
        changed = False
        if min_user > 0:
            counts = np.bincount(u_codes[keep], minlength=u_codes.max() + 1 if len(u_codes) else 1)
            bad = counts[u_codes] < min_user
            bad &= keep
            if bad.any():
                keep &= ~bad
                changed = True
        if min_item > 0:
            counts = np.bincount(i_codes[keep], minlength=i_codes.max() + 1 if len(i_codes) else 1)
            bad = counts[i_codes] < min_item
            bad &= keep
            if bad.any():
                keep &= ~bad
                changed = True
    if not keep.any():
        raise DataError("dataset emptied by filtering")
    if keep.all():
        return ds
    return replace(ds, inter=ds.inter.select_rows(np.flatnonzero(keep)))


@dataclass(frozen=True)
class Interval:
    """Numeric interval predicate; closed below, open above by default."""

    lo: float = -math.inf
    hi: float = math.inf
    lo_closed: bool = True
    hi_closed: bool = False

    def mask(self, values):
        values = np.asarray(values, dtype=np.float64)
        low = values >= self.lo if self.lo_closed else values > self.lo
        high = values <= self.hi if self.hi_closed else values < self.hi
        return low & high


@dataclass(frozen=True)
class ValueSet:
    """Membership predicate over an explicit value set."""

    values: frozenset

    def mask(self, column):
        return np.array([v in self.values for v in _iter_column(column)], dtype=bool)


def _iter_column(column):
    if isinstance(column, np.ndarray):
        return column.tolist()
    return column


def filter_by_field_value(ds: Dataset, field_name, predicate) -> Dataset:
    """Keep interaction rows whose ``field_name`` satisfies ``predicate``.

    ``predicate`` is an :class:`Interval`, a :class:`ValueSet`, or any
    object with a ``mask(column) -> bool array`` method.  Missing values
    never satisfy interval predicates.  No ID re-remapping happens here.
    """
    if not ds.inter.has_field(field_name):
        raise DataError(f"unknown field {field_name!r}")
    column = ds.inter.columns[field_name]
    mask = np.asarray(predicate.mask(column), dtype=bool)
    if mask.shape != (len(ds.inter),):
        raise DataError("predicate produced a mask of the wrong length")
    if not mask.any():
        raise DataError("dataset emptied by filtering")
    if mask.all():
        return ds
    return replace(ds, inter=ds.inter.select_rows(np.flatnonzero(mask)))


# ---------------------------------------------------------------------------
# ID remapping


def _token_occurrences(ds: Dataset):
    """Ordered token sources per vocabulary, honoring cross-table sharing.

    The user vocabulary unifies the interaction user column, the user
    table, and both endpoint columns of the social graph; the item
    vocabulary unifies interactions, the item table, and the item side of
    the link table; kg head/tail share one entity vocabulary with the
    entity side of the link table.  Every other token field gets a
    vocabulary of its own, shared across tables by field name.
    """
    sources: dict[str, list] = {}
    owner: dict[tuple, str] = {}

    def add(vocab_key, table, field_name):
        sources.setdefault(vocab_key, [])
        sources[vocab_key].append(table.columns[field_name])
        owner[(id(table), field_name)] = vocab_key

    add(ds.user_field, ds.inter, ds.user_field)
    add(ds.item_field, ds.inter, ds.item_field)
    if ds.user_feat is not None:
        add(ds.user_field, ds.user_feat, ds.user_field)
    if ds.item_feat is not None:
        add(ds.item_field, ds.item_feat, ds.item_field)
    if ds.net is not None:
        for pos in (0, 1):
            add(ds.user_field, ds.net, ds.net.fields[pos].name)
    if ds.link is not None:
        add(ds.item_field, ds.link, ds.link.fields[0].name)
    if ds.kg is not None:
        add("__entity__", ds.kg, ds.kg.fields[0].name)
        add("__entity__", ds.kg, ds.kg.fields[1].name)
    if ds.link is not None:
        add("__entity__", ds.link, ds.link.fields[1].name)
    if ds.kg is not None:
        add("__relation__", ds.kg, ds.kg.fields[2].name)

    for _, table in ds.tables:
        for spec in table.fields:
            key = (id(table), spec.name)
            if spec.ftype.is_token and key not in owner:
                add(spec.name, table, spec.name)
    return sources, owner


def _tokens_in(column):
    for cell in column:
        if cell is None:
            continue
        if isinstance(cell, tuple):
            yield from cell
        else:
            yield cell


def remap_ids(ds: Dataset) -> Dataset:
    """Encode every token field to contiguous IDs (first occurrence first).

    Missing tokens encode to the padding ID 0.  Returns ``ds`` unchanged
    if it is already encoded.
    """
    if ds.encoded:
        return ds
    sources, owner = _token_occurrences(ds)
    vocabs_by_key = {}
    for key, cols in sources.items():
        def gen(cols=cols):
            for col in cols:
                yield from _tokens_in(col)
        vocabs_by_key[key] = Vocabulary(key, gen())

    new_tables = {}
    vocabs: dict[str, Vocabulary] = {}
    for attr, table in ds.tables:
        cols = dict(table.columns)
        for spec in table.fields:
            if not spec.ftype.is_token:
                continue
            vocab = vocabs_by_key[owner[(id(table), spec.name)]]
            vocabs[spec.name] = vocab
            raw = table.columns[spec.name]
            if spec.ftype == FieldType.TOKEN:
                cols[spec.name] = np.array([vocab.encode(t) for t in raw], dtype=np.int64)
            else:
                cols[spec.name] = [
                    np.array([vocab.encode(t) for t in cell], dtype=np.int64)
                    if cell is not None else np.empty(0, dtype=np.int64)
                    for cell in raw
                ]
        new_tables[attr] = DataTable(table.kind, table.fields, cols)
    return replace(ds, vocabs=vocabs, encoded=True, **new_tables)


# ---------------------------------------------------------------------------
# value repair and shaping


def fill_nan(ds: Dataset) -> Dataset:
    """Impute missing values across all tables.

    Missing floats become the column mean over observed values; a float
    column with no observed value is an error.  Missing sequence cells
    become empty sequences.  Missing scalar tokens already carry the
    padding ID 0 after :func:`remap_ids` (encoding maps them there), so
    they need no work here.
    """
    new_tables = {}
    touched = False
    for attr, table in ds.tables:
        cols = dict(table.columns)
        table_touched = False
        for spec in table.fields:
            col = table.columns[spec.name]
            if spec.ftype == FieldType.FLOAT:
                nans = np.isnan(col)
                if not nans.any():
                    continue
                if nans.all():
                    raise DataError(f"column {spec.name!r} has no observed values")
                filled = col.copy()
                filled[nans] = col[~nans].mean()
                cols[spec.name] = filled
                table_touched = True
            elif spec.ftype.is_seq:
                if any(cell is None for cell in col):
                    empty = (np.empty(0, dtype=np.int64)
                             if spec.ftype == FieldType.TOKEN_SEQ and ds.encoded
                             else () if spec.ftype == FieldType.TOKEN_SEQ
                             else np.empty(0, dtype=np.float64))
                    cols[spec.name] = [cell if cell is not None else empty for cell in col]
                    table_touched = True
        if table_touched:
            new_tables[attr] = DataTable(table.kind, table.fields, cols)
            touched = True
    return replace(ds, **new_tables) if touched else ds


def set_label_by_threshold(ds: Dataset, field_name, threshold, label_field="label") -> Dataset:
    """Add a binary ``label`` column: 1.0 where ``field_name`` >= threshold.

    Missing values count as below the threshold; run :func:`fill_nan`
    first if that is not wanted.
    """
    if not ds.inter.has_field(field_name):
        raise DataError(f"unknown field {field_name!r}")
    if ds.inter.field(field_name).ftype != FieldType.FLOAT:
        raise DataError(f"field {field_name!r} is not a float field")
    values = ds.inter.columns[field_name]
    labels = (values >= threshold).astype(np.float64)
    inter = ds.inter.append_field(FieldSpec(label_field, FieldType.FLOAT), labels)
    return replace(ds, inter=inter)


def normalize(ds: Dataset, fields) -> Dataset:
    """Min-max rescale the listed float columns to [0, 1].

    A constant column maps to all zeros.  Each occurrence of a field name
    (across tables) is rescaled independently.
    """
    remaining = set(fields)
    new_tables = {}
    for attr, table in ds.tables:
        cols = dict(table.columns)
        table_touched = False
        for spec in table.fields:
            if spec.name not in fields:
                continue
            if spec.ftype != FieldType.FLOAT:
                raise DataError(f"field {spec.name!r} is not a float field")
            remaining.discard(spec.name)
            col = table.columns[spec.name]
            observed = col[~np.isnan(col)]
            if len(observed) == 0:
                raise DataError(f"column {spec.name!r} has no observed values")
            lo, hi = observed.min(), observed.max()
            scaled = np.zeros_like(col) if hi == lo else (col - lo) / (hi - lo)
            if hi == lo:
                scaled[np.isnan(col)] = np.nan
            cols[spec.name] = scaled
            table_touched = True
        if table_touched:
            new_tables[attr] = DataTable(table.kind, table.fields, cols)
    if remaining:
        raise DataError(f"unknown field {sorted(remaining)[0]!r}")
    return replace(ds, **new_tables) if new_tables else ds
