"""Pure numpy top-k selection, the fallback for the compiled kernel.

Partial selection, not a full sort: ``argpartition`` (O(m) per row) finds
the k-th largest value, an exact tie sweep picks the lowest-index entries
at the boundary, and only the k winners get sorted (O(k log k)).  Output
is bit-identical to the compiled kernel: per row, the k highest-scoring
column indices, descending score, ties broken by ascending index.

Scores must be finite or -inf (the sentinel for unrankable entries);
NaN is not supported.
"""

import numpy as np


def topk_indices(scores, k):
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    n, m = scores.shape
    if k == m:
        winners = np.ones((n, m), dtype=bool)
    else:
        part = np.argpartition(scores, m - k, axis=1)[:, m - k:]
        thresh = np.take_along_axis(scores, part, axis=1).min(axis=1)
        above = scores > thresh[:, None]
        need = k - above.sum(axis=1)
        at = scores == thresh[:, None]
        winners = above | (at & (np.cumsum(at, axis=1) <= need[:, None]))
    idx = np.nonzero(winners)[1].reshape(n, k).astype(np.int64)
    vals = np.take_along_axis(scores, idx, axis=1)
    order = np.argsort(-vals, axis=1, kind="stable")
    return np.take_along_axis(idx, order, axis=1)
