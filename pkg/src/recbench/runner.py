"""End-to-end experiment execution.

``run_experiment`` drives the whole flow: read the table files, apply the
configured preprocessing (filters in config order, then ID remapping,
imputation, labeling, normalization), build the split per the evaluation
setting, train the model with per-epoch validation, early stopping and
checkpointing, evaluate the best checkpoint on the test split, and write
``report.txt`` / ``report.json`` / ``run.log`` plus the ``model_last`` /
``model_best`` checkpoints into the output directory.

Given identical table files, config, and seed, the report files are
byte-identical across runs; wall-clock timestamps live only in the log.
Training can be interrupted after any epoch (``stop_after_epoch`` or the
CLI ``--stop-after-epoch`` flag) and resumed from the last checkpoint
with bitwise-identical final parameters.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset as ds_mod
from .config import Config, config_from_dict, parse_filter_spec, split_metric_key
from .errors import CheckpointError, ConfigError, RecbenchError
from .evaluator import Evaluator, MetricReport
from .metrics import metric_direction, metric_kind
from .models import build_model, load_state, save_state
from .protocol import (build_candidates, history_by_user, make_split,
                       parse_eval_setting)
from .tables import TableKind, read_table

_OPS = {">=": np.greater_equal, "<=": np.less_equal, ">": np.greater,
        "<": np.less, "==": np.equal, "!=": np.not_equal}


class _Predicate:
    def __init__(self, op, value):
        self.op, self.value = _OPS[op], value

    def mask(self, column):
        return self.op(np.asarray(column, dtype=np.float64), self.value)


class RunLog:
    """Append-only run log; timestamps stay out of the report files."""

    def __init__(self, path=None, echo=False):
        self.path = Path(path) if path else None
        self.echo = echo
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def write(self, message):
        line = f"{time.strftime('%Y-%m-%d %H:%M:%S')} | {message}"
        if self.path:
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")
        if self.echo:
            print(line)


def load_dataset(cfg: Config, log=None) -> ds_mod.Dataset:
    """Read the configured tables and run the preprocessing chain."""
    log = log or RunLog()
    tables = {}
    for attr, key, kind in (("inter", "inter_path", TableKind.INTER),
                            ("user_feat", "user_path", TableKind.USER),
                            ("item_feat", "item_path", TableKind.ITEM),
                            ("kg", "kg_path", TableKind.KG),
                            ("link", "link_path", TableKind.LINK),
                            ("net", "net_path", TableKind.NET)):
        path = getattr(cfg, key)
        if path:
            tables[attr] = read_table(path, kind, cfg.separator)
    ds = ds_mod.Dataset.build(user_field=cfg.user_field,
                              item_field=cfg.item_field, **tables)
    log.write(f"loaded {len(ds.inter)} interaction rows from {cfg.inter_path}")
    for spec in cfg.filters:
        parsed = parse_filter_spec(spec)
        if parsed[0] == "inter_num":
            ds = ds_mod.filter_by_inter_num(ds, parsed[1], parsed[2])
        else:
            _, fname, op, value = parsed
            ds = ds_mod.filter_by_field_value(ds, fname, _Predicate(op, value))
        log.write(f"filter {spec!r} -> {len(ds.inter)} rows")
    ds = ds_mod.remap_ids(ds)
    log.write(f"remapped IDs: {ds.n_users - 1} users, {ds.n_items - 1} items")
    ds = ds_mod.fill_nan(ds)
    if cfg.label_source:
        ds = ds_mod.set_label_by_threshold(ds, cfg.label_source,
                                           cfg.label_threshold, cfg.truth_field)
        log.write(f"labels: {cfg.label_source} >= {cfg.label_threshold}")
    if cfg.normalize_fields:
        ds = ds_mod.normalize(ds, list(cfg.normalize_fields))
        log.write(f"normalized {list(cfg.normalize_fields)}")
    return ds


def _value_pairs(ds, rows, truth_field):
    rows = np.asarray(rows, dtype=np.int64)
    users = ds.user_ids()[rows]
    items = ds.item_ids()[rows]
    truths = ds.inter.columns[truth_field][rows]
    return (users, items), truths


def _make_evaluator(ds, split, plan, cfg: Config, metric_names, ks, target):
    """Wire an Evaluator for the valid or test stage (None if no targets)."""
    ranking = [m for m in metric_names if metric_kind(m) == "ranking"]
    value = [m for m in metric_names if metric_kind(m) == "value"]
    target_rows = split.test if target == "test" else split.valid
    if len(target_rows) == 0:
        return None
    users, positives, candidates, mask_items = (), (), None, None
    mask_label, cand_label = "none", "full"
    if ranking:
        cand = build_candidates(ds, split, plan.candidates, plan.seed,
                                plan.n_negatives, target=target)
        if len(cand.users) == 0:
            return None
        users, positives, candidates = cand.users, cand.positives, cand.candidates
        cand_label = cand.describe()
        if plan.candidates == "full" and cfg.mask_train:
            history_rows = (split.train if target == "valid"
                            else np.concatenate([split.train, split.valid]))
            hist = history_by_user(ds, history_rows)
            mask_items = [hist.get(int(u), np.empty(0, np.int64)) for u in users]
            mask_label = "train" if target == "valid" else "train+valid"
    value_pairs = None
    if value:
        if not ds.inter.has_field(cfg.truth_field):
            raise ConfigError(f"value metrics need the {cfg.truth_field!r} column; "
                              "set label_source/label_threshold")
        value_pairs = _value_pairs(ds, target_rows, cfg.truth_field)
    return Evaluator(ds.n_items, users, positives, metric_names, ks,
                     mask_items=mask_items, candidates=candidates,
                     batch_size=cfg.eval_batch_size, mask_label=mask_label,
                     candidate_label=cand_label, value_pairs=value_pairs,
                     config_hash=cfg.hash, user_field=cfg.user_field,
                     item_field=cfg.item_field)


@dataclass
class TrainState:
    epoch: int = 0
    best_score: float = math.nan
    best_epoch: int = 0
    stale: int = 0
    finished: bool = False


@dataclass
class RunResult:
    report: MetricReport | None
    config_hash: str
    epoch_losses: list = field(default_factory=list)
    valid_scores: list = field(default_factory=list)
    best_epoch: int = 0
    interrupted: bool = False
    out_dir: Path | None = None
    report_text_path: Path | None = None
    report_json_path: Path | None = None
    checkpoint_best: Path | None = None
    checkpoint_last: Path | None = None


def _manifest(cfg, state: TrainState, rng, extra=None):
    manifest = {
        "model": cfg.model,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash,
        "epoch": state.epoch,
        "best_score": None if math.isnan(state.best_score) else state.best_score,
        "best_epoch": state.best_epoch,
        "stale": state.stale,
        "finished": state.finished,
        "rng_state": rng.bit_generator.state if rng is not None else None,
    }
    if extra:
        manifest.update(extra)
    return manifest


def _fit(model, cfg: Config, rng, valid_scorer, state: TrainState,
         ckpt_best, ckpt_last, log, stop_after_epoch=None):
    """Train to completion, early stop, or interruption; returns history."""
    direction = metric_direction(cfg.valid_metric)
    losses, scores = [], []
    interrupted = False

    def improved(score):
        return math.isnan(state.best_score) or direction * (score - state.best_score) > 0

    def checkpoint(path):
        save_state(path, _manifest(cfg, state, rng), model.state_arrays())

    if not model.iterative:
        loss = model.calculate_loss(model.train_batch())
        losses.append(float(loss))
        state.epoch = 1
        score = valid_scorer(model) if valid_scorer else None
        if score is not None:
            scores.append(score)
            state.best_score = score
        state.best_epoch = 1
        state.finished = True
        checkpoint(ckpt_best)
        checkpoint(ckpt_last)
        log.write(f"fit (closed form): loss={loss:.6f}"
                  + (f" valid={score:.6f}" if score is not None else ""))
        return losses, scores, interrupted

    for epoch in range(state.epoch + 1, cfg.train.epochs + 1):
        batch_losses = [model.calculate_loss(b) for b in model.epoch_batches(rng)]
        epoch_loss = float(np.mean(batch_losses))
        losses.append(epoch_loss)
        state.epoch = epoch
        score = valid_scorer(model) if valid_scorer else None
        if score is not None:
            scores.append(score)
            if improved(score):
                state.best_score = score
                state.best_epoch = epoch
                state.stale = 0
                checkpoint(ckpt_best)
            else:
                state.stale += 1
        else:
            state.best_epoch = epoch
            checkpoint(ckpt_best)
        stopping = score is not None and state.stale >= cfg.train.patience
        if stopping or epoch == cfg.train.epochs:
            state.finished = True
        checkpoint(ckpt_last)
        log.write(f"epoch {epoch}: loss={epoch_loss:.6f}"
                  + (f" valid[{cfg.valid_metric}]={score:.6f}" if score is not None else "")
                  + (f" (best epoch {state.best_epoch})"))
        if state.finished:
            if stopping:
                log.write(f"early stop: no improvement for {state.stale} epochs")
            break
        if stop_after_epoch is not None and epoch >= stop_after_epoch:
            interrupted = True
            log.write(f"interrupted after epoch {epoch}; resume from {ckpt_last}")
            break
    return losses, scores, interrupted


def _finalize(model, cfg, ds, split, plan, state, ckpt_best, out_dir, log) -> RunResult:
    """Evaluate the best checkpoint on the test stage and write reports."""
    manifest, arrays = load_state(ckpt_best)
    model.load_state_arrays(arrays)
    test_eval = _make_evaluator(ds, split, plan, cfg, list(cfg.metrics),
                                list(cfg.topk), target="test")
    if test_eval is None:
        raise RecbenchError("test split is empty; nothing to evaluate")
    report = test_eval.evaluate(model)
    text_path = out_dir / "report.txt"
    json_path = out_dir / "report.json"
    text_path.write_text(report.to_text(), encoding="utf-8")
    json_path.write_text(report.to_json(), encoding="utf-8")
    for key, value in report.values.items():
        log.write(f"test {key} = {value!r}")
    return RunResult(report=report, config_hash=cfg.hash,
                     best_epoch=state.best_epoch, out_dir=out_dir,
                     report_text_path=text_path, report_json_path=json_path,
                     checkpoint_best=ckpt_best,
                     checkpoint_last=out_dir / "model_last.ckpt")


def _prepare(cfg: Config, log):
    for key, value in sorted(cfg.to_dict().items()):
        log.write(f"config.{key} = {value!r}")
    log.write(f"config hash {cfg.hash}")
    ds = load_dataset(cfg, log)
    plan = parse_eval_setting(cfg.eval_setting, seed=cfg.seed,
                              ratios=cfg.split_ratios)
    split = make_split(ds, plan, time_field=cfg.time_field)
    log.write(f"split {plan.describe()}: train={len(split.train)} "
              f"valid={len(split.valid)} test={len(split.test)}")
    return ds, plan, split


def _valid_scorer(ds, split, plan, cfg):
    base, k = split_metric_key(cfg.valid_metric)
    kind = metric_kind(base)
    if kind == "ranking" and k is None:
        raise ConfigError(f"ranking valid_metric needs a K, e.g. {base}@10")
    ks = [k] if k is not None else []
    ev = _make_evaluator(ds, split, plan, cfg, [base], ks, target="valid")
    if ev is None:
        return None
    key = f"{base}@{k}" if k is not None else base

    def scorer(model):
        return ev.evaluate(model).values[key]

    return scorer


def run_experiment(cfg: Config, stop_after_epoch=None, echo=False) -> RunResult:
    """Execute the full flow; see the module docstring."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = RunLog(out_dir / "run.log", echo=echo)
    ds, plan, split = _prepare(cfg, log)
    if len(split.train) == 0:
        raise RecbenchError("train split is empty")
    rng = np.random.default_rng(cfg.train.seed)
    model = build_model(cfg.model, ds, split.train, cfg.train,
                        params=cfg.model_params.get(cfg.model, {}), rng=rng)
    scorer = _valid_scorer(ds, split, plan, cfg)
    if scorer is None:
        log.write("no validation targets; training runs all epochs")
    ckpt_best = out_dir / "model_best.ckpt"
    ckpt_last = out_dir / "model_last.ckpt"
    state = TrainState()
    losses, scores, interrupted = _fit(model, cfg, rng, scorer, state,
                                       ckpt_best, ckpt_last, log,
                                       stop_after_epoch=stop_after_epoch)
    if interrupted:
        return RunResult(report=None, config_hash=cfg.hash, epoch_losses=losses,
                         valid_scores=scores, best_epoch=state.best_epoch,
                         interrupted=True, out_dir=out_dir,
                         checkpoint_best=ckpt_best, checkpoint_last=ckpt_last)
    result = _finalize(model, cfg, ds, split, plan, state, ckpt_best, out_dir, log)
    result.epoch_losses = losses
    result.valid_scores = scores
    return result


def resume_experiment(checkpoint_path, config_path=None, overrides=(),
                      force=False, stop_after_epoch=None, echo=False) -> RunResult:
    """Continue (or re-emit) a run from its last checkpoint.

    The checkpoint carries the fully resolved config.  Passing a config
    file or overrides recomputes the hash; a mismatch is an error unless
    ``force`` is set.  Resuming an already-finished run re-emits the
    report without training.
    """
    manifest, arrays = load_state(checkpoint_path)
    stored_cfg = config_from_dict(manifest["config"])
    if config_path is not None or overrides:
        from .config import load_config

        cfg = load_config(config_path, overrides)
        if cfg.hash != manifest["config_hash"]:
            if not force:
                raise CheckpointError(
                    f"config hash mismatch: checkpoint has "
                    f"{manifest['config_hash']}, supplied config hashes to "
                    f"{cfg.hash} (pass force to override)")
            print(f"warning: resuming {checkpoint_path} under a different "
                  f"config ({manifest['config_hash']} -> {cfg.hash})",
                  file=sys.stderr)
    else:
        cfg = stored_cfg
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = RunLog(out_dir / "run.log", echo=echo)
    log.write(f"resuming from {checkpoint_path} at epoch {manifest['epoch']}")
    ds, plan, split = _prepare(cfg, log)
    rng = np.random.default_rng(cfg.train.seed)
    model = build_model(cfg.model, ds, split.train, cfg.train,
                        params=cfg.model_params.get(cfg.model, {}), rng=rng)
    model.load_state_arrays(arrays)
    if manifest["rng_state"] is not None:
        rng.bit_generator.state = manifest["rng_state"]
    state = TrainState(epoch=manifest["epoch"],
                       best_score=(math.nan if manifest["best_score"] is None
                                   else manifest["best_score"]),
                       best_epoch=manifest["best_epoch"],
                       stale=manifest["stale"],
                       finished=manifest["finished"])
    ckpt_best = out_dir / "model_best.ckpt"
    ckpt_last = out_dir / "model_last.ckpt"
    losses, scores, interrupted = [], [], False
    if state.finished:
        log.write("checkpoint already finished; re-emitting the report")
    else:
        scorer = _valid_scorer(ds, split, plan, cfg)
        losses, scores, interrupted = _fit(model, cfg, rng, scorer, state,
                                           ckpt_best, ckpt_last, log,
                                           stop_after_epoch=stop_after_epoch)
    if interrupted:
        return RunResult(report=None, config_hash=cfg.hash, epoch_losses=losses,
                         valid_scores=scores, best_epoch=state.best_epoch,
                         interrupted=True, out_dir=out_dir,
                         checkpoint_best=ckpt_best, checkpoint_last=ckpt_last)
    result = _finalize(model, cfg, ds, split, plan, state, ckpt_best, out_dir, log)
    result.epoch_losses = losses
    result.valid_scores = scores
    return result
