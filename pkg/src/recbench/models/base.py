"""The two-function model interface and shared training plumbing.

Every model exposes the same three entry points:

* ``calculate_loss(batch)``  the training step: consumes one batch,
  updates parameters, returns the (finite) scalar loss.  Closed-form
  models fit entirely on their first call and return 0.0 afterwards.
* ``predict(batch)``         per-row scores for (user, item) pairs.
* ``full_sort_predict(users)``  an (n_users_in_batch, n_items) score
  matrix over the whole catalog, consistent with ``predict``.

Iterative models additionally yield their own epoch batches through
``epoch_batches(rng)`` so the trainer stays model-agnostic.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..batch import Batch
from ..errors import ModelError


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    embedding_dim: int = 64
    l2: float = 1e-6
    batch_size: int = 256
    epochs: int = 50
    patience: int = 5
    seed: int = 42
    loss: str = "bpr"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ModelError("learning_rate must be positive")
        if self.embedding_dim < 1:
            raise ModelError("embedding_dim must be >= 1")
        if self.l2 < 0:
            raise ModelError("l2 must be >= 0")
        if self.batch_size < 1:
            raise ModelError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ModelError("epochs must be >= 1")
        if self.patience < 1:
            raise ModelError("patience must be >= 1")

    def to_dict(self):
        return asdict(self)


class Model:
    """Base class; subclasses fill in the scoring and training logic."""

    kind = "base"
    iterative = False

    def __init__(self, ds, train_rows, cfg: TrainConfig, params=None, rng=None):
        self.ds = ds
        self.train_rows = np.asarray(train_rows, dtype=np.int64)
        self.cfg = cfg
        self.n_users = ds.n_users
        self.n_items = ds.n_items
        self.hyper = dict(params or {})

    # -- interface ---------------------------------------------------------

    def calculate_loss(self, batch: Batch) -> float:
        raise NotImplementedError

    def predict(self, batch: Batch) -> np.ndarray:
        raise NotImplementedError

    def full_sort_predict(self, users) -> np.ndarray:
        raise NotImplementedError

    def epoch_batches(self, rng):
        """Training batches for one epoch (iterative models only)."""
        raise ModelError(f"{self.kind} is a closed-form model without epochs")

    def train_batch(self) -> Batch:
        """The single whole-train batch used to fit closed-form models."""
        users = self.ds.user_ids()[self.train_rows]
        items = self.ds.item_ids()[self.train_rows]
        return Batch({self.ds.user_field: users, self.ds.item_field: items})

    # -- state -------------------------------------------------------------

    def state_arrays(self) -> dict:
        """Learned parameters as named float64 arrays."""
        raise NotImplementedError

    def load_state_arrays(self, arrays):
        raise NotImplementedError

    def _pair_columns(self, batch):
        try:
            return batch[self.ds.user_field], batch[self.ds.item_field]
        except KeyError as exc:
            raise ModelError(f"batch lacks the {exc.args[0]!r} column") from None
