"""Batch evaluation: the accelerated pipeline and the naive oracle.

The evaluator is decoupled from models and data: it consumes a scoring
interface (``full_sort_predict`` / ``predict``), per-user positives and
optional per-user masked histories, and a metric register.  A
:class:`Collector` accumulates per-batch hit blocks in user order;
metrics are computed once after the last batch, so reports are invariant
to the batch size.

Two execution paths share everything but step 3:

* ``evaluate``        reshape -> fill -> partial-selection topk -> index
* ``evaluate_naive``  per-user full sort of the same masked rows

Both paths feed identical hit matrices into identical metric code, so a
correct kernel makes their reports byte-identical.

The padding column (item ID 0) is not a real item and is always masked.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import metrics as metrics_mod
from .batch import Batch
from .errors import EvalError
from .ranking import (NEG_INF, HitMatrix, index_hits, relevance_matrix,
                      reshape_scores, topk_find)


@dataclass(frozen=True)
class MetricReport:
    """Flat metric values plus the provenance shown in report headers."""

    values: dict
    n_users: int
    masked: str
    candidates: str
    config_hash: str = ""

    def to_text(self):
        lines = [f"# users={self.n_users} masked={self.masked} "
                 f"candidates={self.candidates} config={self.config_hash or '-'}"]
        for key, value in self.values.items():
            lines.append(f"{key}\t{value!r}")
        return "\n".join(lines) + "\n"

    def to_json(self):
        payload = dict(self.values)
        payload["n_users"] = float(self.n_users)
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


class Collector:
    """Accumulates per-batch results; the only cross-batch state."""

    def __init__(self):
        self._blocks = []
        self._predictions = []
        self._truths = []

    def add_hits(self, block: HitMatrix):
        self._blocks.append(block)

    def add_values(self, predictions, truths):
        self._predictions.append(np.asarray(predictions, dtype=np.float64))
        self._truths.append(np.asarray(truths, dtype=np.float64))

    def hit_matrix(self) -> HitMatrix:
        return HitMatrix.concatenate(self._blocks)

    def value_arrays(self):
        return (np.concatenate(self._predictions), np.concatenate(self._truths))


def _resolve_metrics(metric_names, ks):
    ranking, value = [], []
    for name in metric_names:
        kind = metrics_mod.metric_kind(name)
        if kind == "ranking":
            ranking.append(name.lower())
        else:
            value.append(name.lower())
    if ranking and not ks:
        raise EvalError("ranking metrics requested but no K values given")
    return ranking, value


class Evaluator:
    """Scores a model over fixed users, positives, and candidate sets.

    Parameters
    ----------
    n_items : catalog size (matrix width, including the padding column)
    users : evaluated user IDs, in collector order
    positives : per-user arrays of relevant item IDs
    mask_items : optional per-user arrays of history to force to -inf
        (full ranking only; sampled candidates already exclude history)
    candidates : optional per-user candidate arrays (sampled ranking)
    value_pairs : optional ((users, items), truths) for rmse/mae metrics
    """

    def __init__(self, n_items, users, positives, metric_names, ks,
                 mask_items=None, candidates=None, batch_size=512,
                 mask_label="none", candidate_label="full",
                 value_pairs=None, config_hash="",
                 user_field="user_id", item_field="item_id"):
        self.n_items = int(n_items)
        self.users = np.asarray(users, dtype=np.int64)
        self.positives = list(positives)
        self.mask_items = list(mask_items) if mask_items is not None else None
        self.candidates = list(candidates) if candidates is not None else None
        self.ks = sorted(set(int(k) for k in ks))
        self.ranking_names, self.value_names = _resolve_metrics(metric_names, self.ks)
        self.batch_size = int(batch_size)
        self.mask_label = mask_label
        self.candidate_label = candidate_label
        self.value_pairs = value_pairs
        self.config_hash = config_hash
        self.user_field = user_field
        self.item_field = item_field
        if self.ranking_names and self.ks and max(self.ks) >= self.n_items:
            raise EvalError(f"K={max(self.ks)} must be smaller than the "
                            f"catalog ({self.n_items} columns)")

    # -- score-matrix assembly -------------------------------------------

    def _batch_scores(self, model, lo, hi, out=None):
        """The reshape and fill steps for one user batch.

        The resulting matrix is private (a reusable buffer or a fresh
        sampled-mode matrix), so history masking and the padding fill
        happen in place; the public :func:`mask_training_items` op keeps
        the copying contract for external callers.
        """
        users = self.users[lo:hi]
        if self.candidates is None:
            scores = reshape_scores(model.full_sort_predict(users), self.n_items)
            mat = out[:len(users)] if out is not None else np.empty_like(scores)
            np.copyto(mat, scores)
        else:
            cands = self.candidates[lo:hi]
            counts = [len(c) for c in cands]
            pair_users = np.repeat(users, counts)
            pair_items = np.concatenate(cands) if cands else np.empty(0, np.int64)
            flat = model.predict(Batch({self.user_field: pair_users,
                                        self.item_field: pair_items}))
            offsets = np.cumsum([0] + counts)
            per_user = [flat[offsets[i]:offsets[i + 1]] for i in range(len(cands))]
            mat = reshape_scores(per_user, self.n_items, candidates=cands)
        if self.mask_items is not None:
            for row, items in enumerate(self.mask_items[lo:hi]):
                if items is not None and len(items):
                    mat[row, items] = NEG_INF
        mat[:, 0] = NEG_INF  # padding slot is never a recommendation
        return mat

    # -- the two pipelines -----------------------------------------------

    def evaluate(self, model) -> MetricReport:
        """Accelerated path: batched matrix pipeline with partial-selection topk."""
        collector = Collector()
        max_k = max(self.ks) if self.ks else 0
        if self.ranking_names:
            buf = (np.empty((min(self.batch_size, len(self.users)), self.n_items))
                   if self.candidates is None else None)
            rel_buf = np.empty((min(self.batch_size, len(self.users)),
                                self.n_items), dtype=np.int8)
            for lo in range(0, len(self.users), self.batch_size):
                hi = min(lo + self.batch_size, len(self.users))
                mat = self._batch_scores(model, lo, hi, out=buf)
                rel = relevance_matrix(self.positives[lo:hi], self.n_items,
                                       out=rel_buf[:hi - lo])
                collector.add_hits(index_hits(topk_find(mat, max_k), rel))
        self._collect_values(model, collector)
        return self._report(collector)

    def evaluate_naive(self, model) -> MetricReport:
        """Oracle path: per-user full sort and scan over the same scores."""
        collector = Collector()
        max_k = max(self.ks) if self.ks else 0
        if self.ranking_names:
            buf = (np.empty((1, self.n_items))
                   if self.candidates is None else None)
            for lo in range(0, len(self.users)):
                row = self._batch_scores(model, lo, lo + 1, out=buf)[0]
                order = np.argsort(-row, kind="stable")
                top = order[:max_k]
                rel_row = np.zeros(self.n_items, dtype=np.int8)
                rel_row[self.positives[lo]] = 1
                hit_row = np.empty((1, max_k), dtype=np.int8)
                for rank, item in enumerate(top):
                    hit_row[0, rank] = rel_row[item]
                collector.add_hits(HitMatrix(hit_row,
                                             rel_row.sum(dtype=np.int64).reshape(1)))
        self._collect_values(model, collector)
        return self._report(collector)

    # -- shared tail -------------------------------------------------------

    def _collect_values(self, model, collector):
        if not self.value_names:
            return
        if self.value_pairs is None:
            raise EvalError("value metrics requested but no prediction targets "
                            "(is the truth field present?)")
        (users, items), truths = self.value_pairs
        for lo in range(0, len(users), self.batch_size):
            hi = min(lo + self.batch_size, len(users))
            preds = model.predict(Batch({self.user_field: users[lo:hi],
                                         self.item_field: items[lo:hi]}))
            collector.add_values(preds, truths[lo:hi])

    def _report(self, collector) -> MetricReport:
        values = {}
        if self.ranking_names:
            hm = collector.hit_matrix()
            for name in self.ranking_names:
                fn = metrics_mod.ranking_metric(name)
                for k in self.ks:
                    per_user = fn(hm.hits, hm.pos_counts, k)
                    values[f"{name}@{k}"] = metrics_mod.mean_of(per_user)
        if self.value_names:
            preds, truths = collector.value_arrays()
            for name in self.value_names:
                values[name] = metrics_mod.value_metric(name)(preds, truths)
        return MetricReport(values, len(self.users), self.mask_label,
                            self.candidate_label, self.config_hash)


def evaluate(model, ds, plan, metric_names, ks, batch_size=512,
             mask_train=True, time_field="timestamp") -> MetricReport:
    """Convenience wrapper: split the dataset per ``plan`` and evaluate.

    Builds the split and candidates from scratch; the runner wires the
    same pieces explicitly so training and evaluation share one split.
    """
    from .protocol import build_candidates, history_by_user, make_split

    split = make_split(ds, plan, time_field=time_field)
    cand = build_candidates(ds, split, plan.candidates, plan.seed,
                            plan.n_negatives, target="test")
    mask_items = None
    mask_label = "none"
    if plan.candidates == "full" and mask_train:
        hist = history_by_user(ds, np.concatenate([split.train, split.valid]))
        mask_items = [hist.get(int(u), np.empty(0, np.int64)) for u in cand.users]
        mask_label = "train+valid"
    ev = Evaluator(ds.n_items, cand.users, cand.positives, metric_names, ks,
                   mask_items=mask_items, candidates=cand.candidates,
                   batch_size=batch_size, mask_label=mask_label,
                   candidate_label=cand.describe(),
                   user_field=ds.user_field, item_field=ds.item_field)
    return ev.evaluate(model)
