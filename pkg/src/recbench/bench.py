"""Timing harness: accelerated pipeline vs naive per-user sorting.

Builds a seeded random score matrix and random per-user positives, then
measures the same metric computation through both evaluation paths over
several repeats (one untimed warmup each).  Correctness is a
precondition of the timing: both paths must emit byte-identical reports,
and the result records whether they did.

When the compiled top-k kernel is available, the kernel itself is also
timed against the pure numpy fallback on identical batches, so the two
backends the package can run on are compared side by side.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .evaluator import Evaluator
from .ranking import TOPK_BACKEND, _BACKENDS

_BENCH_METRICS = ("recall", "ndcg")


class FixedScores:
    """Pseudo-model serving rows of a precomputed score matrix."""

    def __init__(self, matrix):
        self.matrix = matrix

    def full_sort_predict(self, users):
        users = np.asarray(users)
        if len(users) and np.array_equal(
                users, np.arange(users[0], users[0] + len(users))):
            return self.matrix[users[0]:users[0] + len(users)]  # view
        return self.matrix[users]


@dataclass
class BenchResult:
    n_users: int
    n_items: int
    k: int
    repeats: int
    seed: int
    naive_seconds: float
    accel_seconds: float
    speedup: float
    reports_identical: bool
    backend: str
    kernel_seconds: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    def to_text(self):
        lines = [
            f"benchmark: {self.n_users} users x {self.n_items} items, "
            f"K={self.k}, mean of {self.repeats} runs, seed={self.seed}",
            f"naive per-user full sort : {self.naive_seconds:.4f} s",
            f"accelerated pipeline     : {self.accel_seconds:.4f} s "
            f"(topk backend: {self.backend})",
            f"speedup                  : {self.speedup:.1f}x",
            f"reports identical        : {'yes' if self.reports_identical else 'NO'}",
        ]
        for name, secs in self.kernel_seconds.items():
            lines.append(f"topk kernel [{name:<6}]      : {secs:.4f} s")
        for key, value in self.metrics.items():
            lines.append(f"{key} = {value!r}")
        return "\n".join(lines) + "\n"


def _timed(fn, repeats):
    fn()  # warmup
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def bench_eval(n_users, n_items, k=10, repeats=10, seed=0,
               batch_size=1024) -> BenchResult:
    """Time both evaluation paths on one synthetic full-ranking instance."""
    if n_users < 1 or n_items < 2 or k < 1 or repeats < 1:
        raise ValueError("benchmark sizes must be positive (and n_items >= 2)")
    rng = np.random.default_rng(seed)
    scores = rng.standard_normal((n_users, n_items))
    pos_counts = rng.integers(1, 6, size=n_users)
    positives = [rng.choice(np.arange(1, n_items), size=c, replace=False)
                 for c in pos_counts]
    model = FixedScores(scores)
    evaluator = Evaluator(n_items, np.arange(n_users), positives,
                          list(_BENCH_METRICS), [k], batch_size=batch_size,
                          mask_label="none", candidate_label="full")
    accel_report = evaluator.evaluate(model)
    naive_report = evaluator.evaluate_naive(model)
    identical = (accel_report.to_text() == naive_report.to_text()
                 and accel_report.to_json() == naive_report.to_json())
    accel_s = _timed(lambda: evaluator.evaluate(model), repeats)
    naive_s = _timed(lambda: evaluator.evaluate_naive(model), repeats)
    kernel_seconds = {}
    if len(_BACKENDS) > 1:
        sample = scores[:min(n_users, batch_size)]
        for name in sorted(_BACKENDS):
            impl = _BACKENDS[name]
            kernel_seconds[name] = _timed(lambda: impl(sample, k),
                                          min(repeats, 3))
    return BenchResult(
        n_users=n_users, n_items=n_items, k=k, repeats=repeats, seed=seed,
        naive_seconds=naive_s, accel_seconds=accel_s,
        speedup=naive_s / accel_s if accel_s > 0 else float("inf"),
        reports_identical=identical, backend=TOPK_BACKEND,
        kernel_seconds=kernel_seconds, metrics=dict(accel_report.values))
