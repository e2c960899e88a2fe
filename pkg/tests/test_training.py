import json
import math

import numpy as np
import pytest

from igrlab import autodiff as ad
from igrlab.autodiff import Tensor
from igrlab.errors import ConfigurationError, UsageError
from igrlab.model import ModelConfig, MultiTaskModel, Vocabulary
from igrlab.training import (
    Adam,
    Quintuplet,
    TrainConfig,
    bbc_loss,
    branch_ce_loss,
    build_quintuplets,
    lr_at,
    total_loss,
    train,
)
from igrlab.triplets import Triplet, TripletDataset

from oracles import bbc_oracle, ce_oracle


class TestBatchContrastLoss:
    def test_single_example_is_exactly_zero(self):
        rng = np.random.default_rng(0)
        composed = Tensor(rng.normal(size=(1, 8)))
        targets = Tensor(rng.normal(size=(1, 8)))
        loss = bbc_loss(composed, targets, 0.5)
        assert float(loss.data) == 0.0

    def test_orthonormal_pair_fixture(self):
        # identity cosine matrix at temperature 1: -log(e / (e + 1))
        composed = Tensor(np.eye(2))
        targets = Tensor(np.eye(2))
        loss = float(bbc_loss(composed, targets, 1.0).data)
        expected = -math.log(math.e / (math.e + 1.0))
        assert abs(loss - expected) < 1e-9

    def test_indistinguishable_batch_gives_log_b(self):
        row = np.array([0.3, -0.7, 0.2, 0.1])
        composed = Tensor(np.tile(row, (4, 1)))
        targets = Tensor(np.tile(row, (4, 1)))
        loss = float(bbc_loss(composed, targets, 0.25).data)
        assert abs(loss - math.log(4.0)) < 1e-9

    def test_matches_oracle_on_random_batches(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            b, d = int(rng.integers(2, 7)), int(rng.integers(3, 9))
            composed = rng.normal(size=(b, d))
            targets = rng.normal(size=(b, d))
            tau = float(rng.uniform(0.05, 1.0))
            got = float(bbc_loss(Tensor(composed), Tensor(targets), tau).data)
            want = bbc_oracle(composed, targets, tau)
            assert abs(got - want) < 1e-10

    def test_nonnegative(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            loss = float(bbc_loss(
                Tensor(rng.normal(size=(5, 6))),
                Tensor(rng.normal(size=(5, 6))),
                0.0625,
            ).data)
            assert loss >= 0.0

    def test_invariant_to_row_rescaling(self):
        rng = np.random.default_rng(4)
        composed = rng.normal(size=(4, 6))
        targets = rng.normal(size=(4, 6))
        scales = rng.uniform(0.1, 10.0, size=(4, 1))
        a = float(bbc_loss(Tensor(composed), Tensor(targets), 0.1).data)
        b = float(bbc_loss(Tensor(composed * scales), Tensor(targets), 0.1).data)
        assert abs(a - b) < 1e-9

    def test_invariant_to_joint_permutation(self):
        rng = np.random.default_rng(5)
        composed = rng.normal(size=(5, 6))
        targets = rng.normal(size=(5, 6))
        perm = rng.permutation(5)
        a = float(bbc_loss(Tensor(composed), Tensor(targets), 0.1).data)
        b = float(bbc_loss(Tensor(composed[perm]), Tensor(targets[perm]), 0.1).data)
        assert abs(a - b) < 1e-9

    def test_errors(self):
        x = Tensor(np.ones((2, 3)))
        with pytest.raises(UsageError):
            bbc_loss(Tensor(np.ones((0, 3))), Tensor(np.ones((0, 3))), 0.1)
        with pytest.raises(UsageError):
            bbc_loss(x, Tensor(np.ones((3, 3))), 0.1)
        with pytest.raises(UsageError):
            bbc_loss(x, x, 0.0)


class TestBranchClassifierLoss:
    @staticmethod
    def _tiny_model():
        vocab = Vocabulary(["red", "top"])
        return MultiTaskModel(vocab, 4, ModelConfig(d_model=2, classifier_hidden=2, seed=0))

    def test_uninformative_classifier_gives_two_log_two(self):
        model = self._tiny_model()
        model.cls_hidden.weight.data = np.zeros_like(model.cls_hidden.weight.data)
        model.cls_hidden.bias.data = np.zeros_like(model.cls_hidden.bias.data)
        model.cls_out.weight.data = np.zeros_like(model.cls_out.weight.data)
        model.cls_out.bias.data = np.zeros_like(model.cls_out.bias.data)
        rng = np.random.default_rng(0)
        loss = float(branch_ce_loss(
            Tensor(rng.normal(size=(3, 2))), Tensor(rng.normal(size=(3, 2))), model
        ).data)
        assert abs(loss - 2.0 * math.log(2.0)) < 1e-9

    def test_saturated_classifier_is_near_zero(self):
        model = self._tiny_model()
        model.cls_hidden.weight.data = np.eye(2)
        model.cls_hidden.bias.data = np.zeros(2)
        model.cls_out.weight.data = np.array([[100.0, -100.0], [-100.0, 100.0]])
        model.cls_out.bias.data = np.zeros(2)
        vcr_feats = Tensor(np.array([[1.0, 0.0], [1.0, 0.0]]))
        tgr_feats = Tensor(np.array([[0.0, 1.0], [0.0, 1.0]]))
        loss = float(branch_ce_loss(vcr_feats, tgr_feats, model).data)
        assert 0.0 <= loss < 1e-4

    def test_matches_oracle(self):
        model = self._tiny_model()
        rng = np.random.default_rng(7)
        vcr_feats = rng.normal(size=(3, 2))
        tgr_feats = rng.normal(size=(3, 2))
        got = float(branch_ce_loss(Tensor(vcr_feats), Tensor(tgr_feats), model).data)

        def logits(x):
            h = np.maximum(x @ model.cls_hidden.weight.data + model.cls_hidden.bias.data, 0.0)
            return h @ model.cls_out.weight.data + model.cls_out.bias.data

        want = ce_oracle(logits(vcr_feats), logits(tgr_feats))
        assert abs(got - want) < 1e-10

    def test_errors(self):
        model = self._tiny_model()
        with pytest.raises(UsageError):
            branch_ce_loss(Tensor(np.ones((0, 2))), Tensor(np.ones((0, 2))), model)
        with pytest.raises(UsageError):
            branch_ce_loss(Tensor(np.ones((2, 2))), Tensor(np.ones((3, 2))), model)


class TestTotalLoss:
    def test_sums_components(self):
        a = Tensor(np.array(0.5), requires_grad=True)
        b = Tensor(np.array(1.25), requires_grad=True)
        c = Tensor(np.array(2.0), requires_grad=True)
        out = total_loss(a, b, c)
        assert abs(float(out.data) - 3.75) < 1e-12
        ad.backward(out)
        for t in (a, b, c):
            np.testing.assert_allclose(ad.grad_of(t), 1.0, atol=1e-12)


class TestSchedule:
    def test_reference_points(self):
        cfg = TrainConfig()
        assert abs(lr_at(cfg, 0) - 2e-5) < 1e-12
        assert abs(lr_at(cfg, 1) - 5.6e-5) < 1e-12
        assert abs(lr_at(cfg, 4) - 1.64e-4) < 1e-12
        assert abs(lr_at(cfg, 5) - 2e-4) < 1e-12
        assert abs(lr_at(cfg, 14) - 2e-4) < 1e-12
        assert abs(lr_at(cfg, 15) - 2e-5) < 1e-12
        assert abs(lr_at(cfg, 24) - 2e-5) < 1e-12
        assert abs(lr_at(cfg, 25) - 2e-6) < 1e-12
        assert abs(lr_at(cfg, 29) - 2e-6) < 1e-12

    def test_out_of_range_rejected(self):
        cfg = TrainConfig()
        with pytest.raises(UsageError):
            lr_at(cfg, -1)
        with pytest.raises(UsageError):
            lr_at(cfg, cfg.epochs)

    def test_monotone_through_warmup(self):
        cfg = TrainConfig()
        values = [lr_at(cfg, e) for e in range(cfg.warmup_epochs + 1)]
        assert all(b > a for a, b in zip(values, values[1:]))


class TestAdam:
    def test_zero_gradient_is_noop(self):
        t = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        opt = Adam([("t", t)], TrainConfig())
        before = t.data.copy()
        t.grad = np.zeros(2)
        opt.step(1e-3)
        assert np.array_equal(t.data, before)

    def test_descends_a_quadratic(self):
        t = Tensor(np.array([3.0]), requires_grad=True)
        opt = Adam([("t", t)], TrainConfig())
        for _ in range(200):
            t.grad = 2.0 * t.data
            opt.step(0.05)
        assert abs(float(t.data[0])) < 0.5


class TestQuintuplets:
    @staticmethod
    def _dataset(tgr_refs, vcr_refs):
        tgr = [
            Triplet(r, f"{r}-tt{i}", (f"t{i}a", f"t{i}b"), "tgr", "train")
            for i, r in enumerate(tgr_refs)
        ]
        vcr = [
            Triplet(r, f"{r}-vt{i}", (f"v{i}a", f"v{i}b"), "vcr", "train")
            for i, r in enumerate(vcr_refs)
        ]
        return TripletDataset({("train", "tgr"): tgr, ("train", "vcr"): vcr})

    def test_epoch_covers_larger_task_once(self):
        ds = self._dataset([f"r{i}" for i in range(8)], ["r0", "r1"])
        quints = build_quintuplets(ds, np.random.default_rng(0))
        assert len(quints) == 8
        assert sorted(q.tgr_ref for q in quints) == sorted(f"r{i}" for i in range(8))

    def test_natural_join_on_shared_reference(self):
        ds = self._dataset(["r0", "r1", "r2"], ["r0", "r1", "r2"])
        quints = build_quintuplets(ds, np.random.default_rng(1))
        for q in quints:
            assert q.vcr_ref == q.tgr_ref == q.reference_id

    def test_disjoint_references_borrow_real_triplets(self):
        ds = self._dataset([f"a{i}" for i in range(10)], [f"b{i}" for i in range(10)])
        vcr_pairs = {(t.reference_id, t.target_id) for t in ds.triplets("train", "vcr")}
        tgr_pairs = {(t.reference_id, t.target_id) for t in ds.triplets("train", "tgr")}
        quints = build_quintuplets(ds, np.random.default_rng(2))
        assert len(quints) == 10
        for q in quints:
            assert (q.tgr_ref, q.tgr_target_id) in tgr_pairs
            assert (q.vcr_ref, q.vcr_target_id) in vcr_pairs
            assert q.vcr_ref != q.tgr_ref

    def test_partner_cycling_balances_usage(self):
        tgr = [
            Triplet("r0", f"r0-tt{i}", ("sa", "sb"), "tgr", "train") for i in range(6)
        ]
        vcr = [
            Triplet("r0", f"r0-vt{i}", ("sa", "sb"), "vcr", "train") for i in range(2)
        ]
        ds = TripletDataset({("train", "tgr"): tgr, ("train", "vcr"): vcr})
        quints = build_quintuplets(ds, np.random.default_rng(3))
        used = {}
        for q in quints:
            used[q.vcr_target_id] = used.get(q.vcr_target_id, 0) + 1
        assert used == {"r0-vt0": 3, "r0-vt1": 3}

    def test_sentences_come_from_the_pair(self):
        ds = self._dataset(["r0", "r1", "r2", "r3"], ["r0", "r2"])
        by_tgt = {t.target_id: t for t in ds.triplets("train")}
        for q in build_quintuplets(ds, np.random.default_rng(4)):
            assert q.tgr_signal in by_tgt[q.tgr_target_id].feedback
            assert q.vcr_signal in by_tgt[q.vcr_target_id].feedback

    def test_deterministic_under_seed(self):
        ds = self._dataset([f"r{i}" for i in range(12)], [f"r{i}" for i in range(5)])
        a = build_quintuplets(ds, np.random.default_rng(9))
        b = build_quintuplets(ds, np.random.default_rng(9))
        assert a == b

    def test_missing_task_rejected(self):
        ds = TripletDataset({("train", "tgr"): [
            Triplet("r0", "r0-t", ("a", "b"), "tgr", "train")
        ]})
        with pytest.raises(ConfigurationError):
            build_quintuplets(ds, np.random.default_rng(0))


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(temperature=0.0).validate()
        with pytest.raises(ConfigurationError):
            TrainConfig(batch_size=1).validate()
        with pytest.raises(ConfigurationError):
            TrainConfig(warmup_epochs=20, decay_epochs=(15, 25)).validate()
        with pytest.raises(ConfigurationError):
            TrainConfig(single_task="both").validate()

    def test_round_trip(self):
        cfg = TrainConfig(epochs=3, seed=5)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigurationError):
            TrainConfig.from_dict({"epochs": 3, "n_epochs": 3})


class TestTrainLoop:
    def test_deterministic_parameters(self, small_corpus, small_dataset):
        kwargs = dict(
            model_config=ModelConfig(d_model=16, seed=1),
            train_config=TrainConfig(batch_size=8, epochs=2, seed=1),
        )
        m1, h1 = train(small_dataset, small_corpus, **kwargs)
        m2, h2 = train(small_dataset, small_corpus, **kwargs)
        for (n1, t1), (n2, t2) in zip(m1.params(), m2.params()):
            assert n1 == n2
            assert np.array_equal(t1.data, t2.data), n1
        for e1, e2 in zip(h1, h2):
            assert {k: v for k, v in e1.items() if k != "wall_ms"} == \
                {k: v for k, v in e2.items() if k != "wall_ms"}

    def test_zero_epochs_keeps_init(self, small_corpus, small_dataset):
        cfg = ModelConfig(d_model=16, seed=2)
        trained, history = train(
            small_dataset, small_corpus, cfg, TrainConfig(epochs=0, seed=2)
        )
        fresh = MultiTaskModel(
            Vocabulary.build(small_corpus), small_corpus.d_feat(), cfg
        )
        assert history == []
        for (n1, t1), (n2, t2) in zip(trained.params(), fresh.params()):
            assert np.array_equal(t1.data, t2.data), n1

    def test_loss_decreases_on_small_run(self, small_corpus, small_dataset):
        _, history = train(
            small_dataset, small_corpus,
            ModelConfig(d_model=16, seed=0),
            TrainConfig(batch_size=8, epochs=4, seed=0),
        )
        def total(e):
            return e["loss_bbc_v"] + e["loss_bbc_t"] + e["loss_ce"]
        assert total(history[-1]) < total(history[0])

    def test_log_file_schema(self, small_corpus, small_dataset, tmp_path):
        log = tmp_path / "train.jsonl"
        _, history = train(
            small_dataset, small_corpus,
            ModelConfig(d_model=16, seed=0),
            TrainConfig(batch_size=8, epochs=2, seed=0),
            log_path=log,
        )
        lines = [json.loads(l) for l in log.read_text().splitlines()]
        assert len(lines) == 2
        for i, entry in enumerate(lines):
            assert entry["epoch"] == i
            assert set(entry) == {"epoch", "lr", "loss_bbc_v", "loss_bbc_t", "loss_ce", "wall_ms"}
            assert entry["wall_ms"] >= 0.0
        stripped = [{k: v for k, v in e.items() if k != "wall_ms"} for e in history]
        logged = [{k: v for k, v in e.items() if k != "wall_ms"} for e in lines]
        assert stripped == logged

    def test_checkpointing_round_trip(self, small_corpus, small_dataset, tmp_path):
        ckpt = tmp_path / "model.npz"
        model, _ = train(
            small_dataset, small_corpus,
            ModelConfig(d_model=16, seed=0),
            TrainConfig(batch_size=8, epochs=2, seed=0),
            checkpoint_path=ckpt,
        )
        loaded = MultiTaskModel.load(ckpt)
        for (n1, t1), (n2, t2) in zip(model.params(), loaded.params()):
            assert np.array_equal(t1.data, t2.data), n1

    def test_single_task_mode_trains_one_branch(self, small_corpus, small_dataset):
        _, history = train(
            small_dataset, small_corpus,
            ModelConfig(d_model=16, seed=0),
            TrainConfig(batch_size=8, epochs=2, seed=0, single_task="tgr"),
        )
        assert all(e["loss_ce"] == 0.0 and e["loss_bbc_v"] == 0.0 for e in history)
        assert history[0]["loss_bbc_t"] > 0.0
