"""recbench: a benchmarking engine for classic recommender models.

Typed delimited data files, composable evaluation protocols, a
vectorized top-K evaluation path with a compiled kernel (pure numpy
fallback), a small model zoo behind a two-function interface, and a
runner with deterministic training, checkpoint/resume, and
hyperparameter search.
"""

from .batch import Batch, batch_from_table
from .config import Config, load_config
from .dataset import (Dataset, Interval, ValueSet, Vocabulary, fill_nan,
                      filter_by_field_value, filter_by_inter_num, normalize,
                      remap_ids, set_label_by_threshold)
from .errors import RecbenchError
from .evaluator import Evaluator, MetricReport, evaluate
from .protocol import (CandidateSet, EvalPlan, SplitResult, build_candidates,
                       group_by_user, make_split, order_rows,
                       parse_eval_setting, split_rows)
from .ranking import (TOPK_BACKEND, HitMatrix, available_topk_backends,
                      index_hits, mask_training_items, reshape_scores,
                      topk_find)
from .tables import (DataTable, FieldSpec, FieldType, TableKind, convert_csv,
                     read_table, write_table)

__version__ = "0.1.0"

__all__ = [
    "__version__", "RecbenchError",
    "DataTable", "FieldSpec", "FieldType", "TableKind",
    "read_table", "write_table", "convert_csv",
    "Dataset", "Vocabulary", "Interval", "ValueSet",
    "filter_by_inter_num", "filter_by_field_value", "remap_ids", "fill_nan",
    "set_label_by_threshold", "normalize",
    "Batch", "batch_from_table",
    "EvalPlan", "SplitResult", "CandidateSet", "parse_eval_setting",
    "group_by_user", "order_rows", "split_rows", "build_candidates",
    "make_split",
    "TOPK_BACKEND", "available_topk_backends", "topk_find", "reshape_scores",
    "mask_training_items", "index_hits", "HitMatrix",
    "Evaluator", "MetricReport", "evaluate",
    "Config", "load_config",
]
