"""Experiment runner: end-to-end flow, early stopping, resume."""

from pathlib import Path

import numpy as np
import pytest

from recbench.config import load_config
from recbench.errors import CheckpointError
from recbench.models import load_state
from recbench.runner import (RunLog, TrainState, _fit, load_dataset,
                             resume_experiment, run_experiment)
from recbench.tables import (DataTable, FieldSpec, FieldType, TableKind,
                             write_table)
from tests.conftest import planted_interactions

TOY = str(Path(__file__).parent / "data" / "toy.inter")


def _write_planted(tmp_path, **kwargs):
    users, items = planted_interactions(**kwargs)
    table = DataTable(TableKind.INTER,
                      [FieldSpec("user_id", FieldType.TOKEN),
                       FieldSpec("item_id", FieldType.TOKEN)],
                      {"user_id": users, "item_id": items})
    path = tmp_path / "planted.inter"
    write_table(table, path)
    return str(path)


def _bpr_config(tmp_path, inter, out, epochs=6, **extra):
    overrides = [
        f"inter_path={inter}", "model=bpr", f"out_dir={tmp_path / out}",
        f"train.epochs={epochs}", "train.learning_rate=0.1",
        "train.embedding_dim=8", "train.batch_size=64", "train.patience=20",
        "metrics=[recall, ndcg]", "topk=[5]", "seed=3", "train.seed=3",
    ] + [f"{k}={v}" for k, v in extra.items()]
    return load_config(None, overrides)


class TestLoadDataset:
    def test_filters_apply_in_config_order(self, tmp_path):
        cfg = load_config(None, [
            f"inter_path={TOY}",
            "filters=['timestamp>=2.0', 'inter_num(2,1)']",
            "out_dir=" + str(tmp_path),
        ])
        ds = load_dataset(cfg)
        # timestamp>=2.0 keeps 5 rows (a:i2,i3,i4 b:i1,i5 c:i5);
        # then 2-core on users keeps a and b rows only
        assert len(ds.inter) == 5
        assert ds.encoded

    def test_labeling_and_normalization(self, tmp_path):
        inter = tmp_path / "r.inter"
        inter.write_text(
            "user_id:token,item_id:token,rating:float\n"
            "a,x,1.0\na,y,5.0\nb,x,3.0\n", encoding="utf-8")
        cfg = load_config(None, [
            f"inter_path={inter}", "label_source=rating",
            "label_threshold=3.0", "normalize_fields=[rating]",
            f"out_dir={tmp_path}",
        ])
        ds = load_dataset(cfg)
        np.testing.assert_array_equal(ds.inter.columns["label"], [0, 1, 1])
        np.testing.assert_allclose(ds.inter.columns["rating"], [0, 1, 0.5])


class TestToyEndToEnd:
    def test_popularity_recall_matches_hand_computation(self, tmp_path):
        # TO_LS on the committed toy file; popularity counts on train rows:
        # i1 x2 (a,c), i2 x3 (a,b,d). after masking train+valid:
        #   user a ranks i4 first (tie with i5, lower ID wins) -> hit
        #   user b ranks i3 first (all remaining tie at 0)     -> miss
        #   user c ranks i2 first (count 3)                    -> miss
        # mean recall@1 over 3 evaluated users = 1/3
        cfg = load_config(None, [
            f"inter_path={TOY}", "model=popularity",
            "eval_setting=TO_LS,full", "metrics=[recall]", "topk=[1]",
            "valid_metric=recall@1", f"out_dir={tmp_path / 'toy'}",
        ])
        result = run_experiment(cfg)
        assert result.report.values["recall@1"] == pytest.approx(1 / 3)

    def test_determinism_across_runs(self, tmp_path):
        reports = []
        for name in ("r1", "r2"):
            cfg = load_config(None, [
                f"inter_path={TOY}", "model=popularity",
                "eval_setting=TO_LS,full", "metrics=[recall, ndcg, mrr]",
                "topk=[1, 2]", "valid_metric=recall@1",
                f"out_dir={tmp_path / name}",
            ])
            result = run_experiment(cfg)
            reports.append(result.report_text_path.read_bytes()
                           + result.report_json_path.read_bytes())
        assert reports[0] == reports[1]

    def test_run_writes_all_artifacts(self, tmp_path):
        out = tmp_path / "artifacts"
        cfg = load_config(None, [
            f"inter_path={TOY}", "model=popularity", "eval_setting=TO_LS,full",
            "metrics=[recall]", "topk=[1]", "valid_metric=recall@1",
            f"out_dir={out}",
        ])
        run_experiment(cfg)
        for name in ("report.txt", "report.json", "run.log",
                     "model_best.ckpt", "model_last.ckpt"):
            assert (out / name).exists(), name
        log = (out / "run.log").read_text()
        assert "config.seed = 42" in log          # effective values echoed
        assert "config hash" in log


class TestEarlyStopping:
    def test_patience_halts_training(self, tmp_path):
        from recbench.models import BPRModel
        from tests.conftest import build_dataset

        users, items = planted_interactions(n_users=30, n_items=20,
                                            top_frac=0.1, seed=2)
        ds = build_dataset(users, items)
        cfg = load_config(None, [
            "inter_path=unused.inter", "model=bpr", "train.epochs=10",
            "train.patience=2", f"out_dir={tmp_path}",
        ])
        rng = np.random.default_rng(0)
        model = BPRModel(ds, np.arange(len(ds.inter)), cfg.train, rng=rng)
        # scripted metric: improves until epoch 3, then flat
        script = iter([0.1, 0.2, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3])
        state = TrainState()
        losses, scores, interrupted = _fit(
            model, cfg, rng, lambda m: next(script), state,
            tmp_path / "best.ckpt", tmp_path / "last.ckpt", RunLog())
        assert not interrupted
        assert state.best_epoch == 3
        assert state.epoch == 5  # halts by best_epoch + patience
        assert state.finished

    def test_no_validation_runs_all_epochs(self, tmp_path):
        # single-interaction users leave the valid split empty under LS
        inter = tmp_path / "tiny.inter"
        inter.write_text("user_id:token,item_id:token\n"
                         "a,x\na,y\nb,x\nb,z\n", encoding="utf-8")
        cfg = load_config(None, [
            f"inter_path={inter}", "model=bpr", "eval_setting=RO_LS,full",
            "train.epochs=3", "topk=[1]", "metrics=[recall]",
            f"out_dir={tmp_path / 'novalid'}",
        ])
        result = run_experiment(cfg)
        assert len(result.epoch_losses) == 3


class TestResume:
    def test_bitwise_resume(self, tmp_path):
        inter = _write_planted(tmp_path, n_users=50, n_items=30,
                               top_frac=0.1, seed=5)
        straight = run_experiment(_bpr_config(tmp_path, inter, "straight",
                                              epochs=8))
        interrupted = run_experiment(
            _bpr_config(tmp_path, inter, "resumed", epochs=8),
            stop_after_epoch=3)
        assert interrupted.interrupted
        resumed = resume_experiment(interrupted.checkpoint_last)
        for ckpt in ("model_last.ckpt", "model_best.ckpt"):
            _, a = load_state(tmp_path / "straight" / ckpt)
            _, b = load_state(tmp_path / "resumed" / ckpt)
            assert set(a) == set(b)
            for key in a:
                np.testing.assert_array_equal(a[key], b[key])
        assert (tmp_path / "straight" / "report.txt").read_bytes() == \
            (tmp_path / "resumed" / "report.txt").read_bytes()

    def test_resume_finished_run_reemits(self, tmp_path):
        inter = _write_planted(tmp_path, n_users=30, n_items=20,
                               top_frac=0.1, seed=6)
        cfg = _bpr_config(tmp_path, inter, "done", epochs=3)
        first = run_experiment(cfg)
        before = first.report_text_path.read_bytes()
        again = resume_experiment(first.checkpoint_last)
        assert again.epoch_losses == []  # no training happened
        assert first.report_text_path.read_bytes() == before
        assert again.report.to_text().encode() == before

    def test_hash_mismatch_rejected_without_force(self, tmp_path):
        inter = _write_planted(tmp_path, n_users=30, n_items=20,
                               top_frac=0.1, seed=7)
        cfg = _bpr_config(tmp_path, inter, "orig", epochs=4)
        run = run_experiment(cfg, stop_after_epoch=2)
        with pytest.raises(CheckpointError, match="hash mismatch"):
            resume_experiment(run.checkpoint_last,
                              overrides=[f"inter_path={inter}",
                                         "model=bpr", "train.epochs=9"])
        forced = resume_experiment(
            run.checkpoint_last, force=True,
            overrides=[f"inter_path={inter}", "model=bpr",
                       f"out_dir={tmp_path / 'orig'}", "train.epochs=4",
                       "train.learning_rate=0.1", "train.embedding_dim=8",
                       "train.batch_size=64", "train.patience=20",
                       "metrics=[recall, ndcg]", "topk=[5]",
                       "seed=3", "train.seed=3"])
        assert forced.report is not None


class TestOtherModels:
    @pytest.mark.parametrize("model,params", [
        ("itemknn", ["itemknn.k=5"]),
        ("ease", ["ease.l2=10.0"]),
    ])
    def test_closed_form_models_run(self, tmp_path, model, params):
        cfg = load_config(None, [
            f"inter_path={TOY}", f"model={model}", "eval_setting=TO_LS,full",
            "metrics=[recall, ndcg]", "topk=[2]", "valid_metric=ndcg@2",
            f"out_dir={tmp_path / model}",
        ] + params)
        result = run_experiment(cfg)
        assert set(result.report.values) == {"recall@2", "ndcg@2"}

    def test_fm_with_value_metrics(self, tmp_path):
        inter = tmp_path / "ctx.inter"
        rng = np.random.default_rng(0)
        rows = [f"u{rng.integers(0, 8)},i{rng.integers(0, 10)},"
                f"{rng.integers(1, 6)}.0,{t}.0" for t in range(60)]
        inter.write_text("user_id:token,item_id:token,rating:float,"
                         "timestamp:float\n" + "\n".join(rows) + "\n",
                         encoding="utf-8")
        cfg = load_config(None, [
            f"inter_path={inter}", "model=fm", "eval_setting=TO_RS,full",
            "label_source=rating", "label_threshold=4.0",
            "metrics=[rmse, mae, recall]", "topk=[3]",
            "valid_metric=rmse", "train.epochs=3",
            "train.learning_rate=0.01", "train.batch_size=16",
            f"out_dir={tmp_path / 'fm'}",
        ])
        result = run_experiment(cfg)
        assert "rmse" in result.report.values
        assert result.report.values["rmse"] >= result.report.values["mae"]

    def test_uni_candidate_evaluation(self, tmp_path):
        inter = _write_planted(tmp_path, n_users=30, n_items=25,
                               top_frac=0.12, seed=9)
        cfg = load_config(None, [
            f"inter_path={inter}", "model=popularity",
            "eval_setting=RO_LS,uni5", "metrics=[recall, ndcg]", "topk=[3]",
            "valid_metric=ndcg@3", f"out_dir={tmp_path / 'uni'}",
        ])
        result = run_experiment(cfg)
        assert result.report.candidates == "uni5"
