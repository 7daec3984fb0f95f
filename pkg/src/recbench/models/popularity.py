"""Non-personalized popularity baseline."""

from __future__ import annotations

import numpy as np

from ..errors import ModelError
from .base import Model


class PopularityModel(Model):
    """score(u, i) = number of training interactions with item i."""

    kind = "popularity"
    iterative = False

    def __init__(self, ds, train_rows, cfg, params=None, rng=None):
        super().__init__(ds, train_rows, cfg, params, rng)
        self.counts = None

    def calculate_loss(self, batch):
        if self.counts is None:
            _, items = self._pair_columns(batch)
            self.counts = np.bincount(items, minlength=self.n_items).astype(np.float64)
        return 0.0

    def _require_fit(self):
        if self.counts is None:
            raise ModelError("popularity model is not fitted yet")

    def predict(self, batch):
        self._require_fit()
        _, items = self._pair_columns(batch)
        return self.counts[items]

    def full_sort_predict(self, users):
        self._require_fit()
        return np.tile(self.counts, (len(users), 1))

    def state_arrays(self):
        self._require_fit()
        return {"item_counts": self.counts}

    def load_state_arrays(self, arrays):
        self.counts = arrays["item_counts"].astype(np.float64)
