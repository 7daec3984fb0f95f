"""The vectorized top-K ranking pipeline.

Evaluation of a batch of users runs in four steps over one n x m score
matrix (n = users in the batch, m = catalog size):

1. reshape   build the matrix: dense model scores for full ranking, or a
             -inf-initialized matrix filled only at candidate positions
             for sampled ranking;
2. fill      overwrite each user's training-item scores with -inf so they
             cannot be recommended (optional, full ranking only);
3. topk      per row, the K highest-scoring item indices, descending
             score, ties broken by ascending index -- partial selection,
             never a full sort;
4. index     gather the relevance matrix at those indices, yielding the
             n x K binary hit matrix all ranking metrics are computed
             from.

The topk step is the hot kernel.  A compiled extension
(:mod:`recbench._topk_cy`) is used when available; a pure numpy
implementation (:mod:`recbench._topk_np`) is the drop-in fallback.  Both
produce bit-identical output, so the backend never affects results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _topk_np
from .errors import EvalError

try:
    from . import _topk_cy
except ImportError:
    _topk_cy = None

NEG_INF = -np.inf

_BACKENDS = {"numpy": _topk_np.topk_indices}
if _topk_cy is not None:
    _BACKENDS["cython"] = _topk_cy.topk_indices

TOPK_BACKEND = "cython" if _topk_cy is not None else "numpy"


def available_topk_backends():
    return tuple(sorted(_BACKENDS))


def topk_find(scores, k, backend=None):
    """Indices of the k largest entries per row of ``scores``.

    Rows of the result are ordered by descending score; equal scores are
    broken by ascending item index.  ``backend`` overrides the default
    kernel (one of :func:`available_topk_backends`).
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise EvalError(f"expected a 2-D score matrix, got shape {scores.shape}")
    n, m = scores.shape
    if not 1 <= k <= m:
        raise EvalError(f"k={k} out of range for {m} items")
    impl = _BACKENDS[TOPK_BACKEND if backend is None else backend]
    return impl(scores, k)


def reshape_scores(scores, n_items, candidates=None) -> np.ndarray:
    """Arrange model scores as one dense (n, n_items) float64 matrix.

    Full ranking: ``scores`` is already (n, n_items) and is validated and
    converted.  Sampled ranking: ``scores`` is a per-user list of arrays
    aligned with ``candidates`` (a per-user list of item-index arrays);
    the matrix is initialized to -inf and filled at candidate positions.
    """
    if candidates is None:
        mat = np.asarray(scores, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[1] != n_items:
            raise EvalError(f"expected shape (n, {n_items}), got {mat.shape}")
        return mat
    out = np.full((len(candidates), n_items), NEG_INF, dtype=np.float64)
    for row, (cand, vals) in enumerate(zip(candidates, scores)):
        cand = np.asarray(cand)
        if len(cand) and cand.max() >= n_items:
            raise EvalError(f"candidate index {int(cand.max())} >= n_items={n_items}")
        out[row, cand] = vals
    return out


def mask_training_items(scores, items_per_user) -> np.ndarray:
    """Copy of ``scores`` with each user's listed items set to -inf."""
    out = np.array(scores, dtype=np.float64, copy=True)
    for row, items in enumerate(items_per_user):
        if items is not None and len(items):
            out[row, items] = NEG_INF
    return out


@dataclass(frozen=True)
class HitMatrix:
    """Binary hits at the top-K ranks plus per-user positive counts."""

    hits: np.ndarray        # (n, K) int8: 1 where rank k held a positive
    pos_counts: np.ndarray  # (n,) int64: positives per user

    def __post_init__(self):
        if self.hits.shape[0] != self.pos_counts.shape[0]:
            raise EvalError("hit matrix and positive counts disagree on users")

    @property
    def width(self):
        return self.hits.shape[1]

    @staticmethod
    def concatenate(blocks) -> "HitMatrix":
        blocks = list(blocks)
        if not blocks:
            raise EvalError("no hit-matrix blocks collected")
        return HitMatrix(np.concatenate([b.hits for b in blocks], axis=0),
                         np.concatenate([b.pos_counts for b in blocks]))


def index_hits(topk, relevance) -> HitMatrix:
    """Gather ``relevance`` at the top-K indices: hits[u][k] = rel[u][topk[u][k]]."""
    topk = np.asarray(topk)
    relevance = np.asarray(relevance)
    if topk.shape[0] != relevance.shape[0]:
        raise EvalError("top-k matrix and relevance matrix disagree on users")
    hits = np.take_along_axis(relevance, topk, axis=1).astype(np.int8)
    return HitMatrix(hits, relevance.sum(axis=1).astype(np.int64))


def relevance_matrix(positives, n_items, out=None) -> np.ndarray:
    """Dense (n, n_items) int8 matrix flagging each user's positives.

    ``out`` may supply a reusable buffer of the right shape.
    """
    if out is None:
        out = np.zeros((len(positives), n_items), dtype=np.int8)
    else:
        out[:] = 0
    for row, items in enumerate(positives):
        out[row, items] = 1
    return out
