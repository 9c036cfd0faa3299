import logging

import numpy as np
import pytest

from sigver.diff import ops
from sigver.diff.optim import Adam
from sigver.evaluation import ProtocolError, compute_scores, report_from_scores
from sigver.model import ModelConfig, SiameseModel
from sigver.pipeline import PairPreparer
from sigver.signature_io import generate_synthetic_dataset
from sigver.training import TrainHyper, labels_of, sample_pairs, train

TOY_LENGTH = 128


@pytest.fixture(scope="module")
def corpus():
    return generate_synthetic_dataset(6, 4, 2, seed=21)


def split(ds, n_train):
    subjects = sorted({s.subject_id for s in ds})
    keep = set(subjects[:n_train])
    return [s for s in ds if s.subject_id in keep], [s for s in ds if s.subject_id not in keep]


def test_pair_ratio(corpus):
    pairs = sample_pairs(corpus, 8, seed=0)
    counts = {lab: sum(p.label == lab for p in pairs) for lab in ("match", "nonmatch_random", "nonmatch_skilled")}
    assert counts == {"match": 4, "nonmatch_random": 2, "nonmatch_skilled": 2}
    assert not pairs.skilled_reallocated


@pytest.mark.parametrize("count", [1, 5, 10, 37])
def test_pair_ratio_rounding(corpus, count):
    pairs = sample_pairs(corpus, count, seed=1)
    assert sum(p.label == "nonmatch_random" for p in pairs) == count // 4
    assert sum(p.label == "nonmatch_skilled" for p in pairs) == count // 4
    assert len(pairs) == count


def test_pairs_deterministic(corpus):
    assert [p.key for p in sample_pairs(corpus, 40, 3)] == [p.key for p in sample_pairs(corpus, 40, 3)]


def test_pairs_do_not_repeat(corpus):
    pairs = sample_pairs(corpus, 60, seed=4)
    keys = [p.key for p in pairs]
    assert len(keys) == len(set(keys))


def test_pair_semantics(corpus):
    for p in sample_pairs(corpus, 80, seed=5):
        same = p.enrolled.subject_id == p.questioned.subject_id
        if p.label == "match":
            assert same and p.questioned.label == "genuine" and p.enrolled.key != p.questioned.key
        elif p.label == "nonmatch_random":
            assert not same and p.questioned.label == "genuine"
        else:
            assert same and p.questioned.label == "skilled_forgery"


def test_no_forgeries_reallocates(corpus, caplog):
    genuine_only = [s for s in corpus if s.label == "genuine"]
    with caplog.at_level(logging.WARNING):
        pairs = sample_pairs(genuine_only, 8, seed=0)
    assert [sum(p.label == lab for p in pairs) for lab in ("match", "nonmatch_random", "nonmatch_skilled")] == [4, 4, 0]
    assert pairs.skilled_reallocated
    assert "re-allocated" in caplog.text


def test_single_subject_rejected(corpus):
    one = [s for s in corpus if s.subject_id == corpus[0].subject_id]
    with pytest.raises(ProtocolError):
        sample_pairs(one, 8, seed=0)


def test_overlapping_subjects_rejected(corpus):
    with pytest.raises(ProtocolError, match="overlapping subjects"):
        train(ModelConfig.reduced("vanilla"), corpus, corpus[:3], TrainHyper(max_epochs=1),
              preparer=PairPreparer(length=TOY_LENGTH))


def toy_hyper(**kw):
    base = dict(max_epochs=2, pairs_per_epoch=8, batch=4, seed=0)
    base.update(kw)
    return TrainHyper(**base)


def test_lr_zero_keeps_parameters(corpus):
    tr, va = split(corpus, 4)
    cfg = ModelConfig.reduced("vanilla", dropout=0.1)
    initial = SiameseModel(cfg).state_arrays()
    res = train(cfg, tr, va, toy_hyper(lr=0.0, max_epochs=3, patience=10),
                preparer=PairPreparer(length=TOY_LENGTH, threads=1))
    assert res.state.step == 6
    for k, v in res.model.state_arrays().items():
        np.testing.assert_array_equal(v, initial[k])


def test_checkpoint_reload_reproduces_validation_eer(corpus, tmp_path):
    tr, va = split(corpus, 4)
    prep = PairPreparer(length=TOY_LENGTH, threads=1)
    ckpt = tmp_path / "best.ckpt"
    res = train(ModelConfig.reduced("vanilla"), tr, va, toy_hyper(max_epochs=3), preparer=prep,
                checkpoint_path=ckpt)
    model, meta, arrays = SiameseModel.load(ckpt)
    assert meta["train_subjects"] == sorted({s.subject_id for s in tr})
    assert meta["train_state"]["best_epoch"] == res.state.best_epoch
    assert any(k.startswith("adam.m/") for k in arrays)
    again = report_from_scores(compute_scores(model, res.validation_comparisons, prep)).eer_overall
    assert abs(again - res.state.best_validation_eer) <= 1e-9


def test_train_state_invariants(corpus):
    tr, va = split(corpus, 4)
    seen = []
    res = train(ModelConfig.reduced("vanilla"), tr, va, toy_hyper(max_epochs=4, patience=2),
                preparer=PairPreparer(length=TOY_LENGTH, threads=1), on_epoch=seen.append)
    assert [r["epoch"] for r in seen] == list(range(1, len(seen) + 1))
    assert set(seen[0]) == {"epoch", "loss", "val_eer_r", "val_eer_s", "val_eer_o"}
    assert res.state.best_validation_eer == min(r["val_eer_o"] for r in seen)
    assert res.state.step == len(seen) * 2


def test_rerun_is_bit_identical(corpus):
    tr, va = split(corpus, 4)

    def run():
        out = []
        train(ModelConfig.reduced("vanilla", dropout=0.1), tr, va, toy_hyper(max_epochs=2),
              preparer=PairPreparer(length=TOY_LENGTH, threads=1), on_epoch=out.append)
        return out

    assert run() == run()


def test_one_adam_step_reduces_frozen_batch_loss():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(8, TOY_LENGTH, 23)).astype(np.float32)
    b = (a + rng.normal(0, 0.3, size=a.shape)).astype(np.float32)
    b[4:] = rng.normal(size=(4, TOY_LENGTH, 23))
    y = np.array([1.0] * 4 + [0.0] * 4, dtype=np.float32)
    decreased = 0
    for seed in range(100):
        model = SiameseModel(ModelConfig.reduced("vanilla", seed=seed))
        opt = Adam(model.parameters(), lr=1e-4)

        def loss():
            return ops.binary_cross_entropy_with_logits(model.pair_logits(a, b), y)

        before = loss()
        before.backward()
        opt.step()
        decreased += float(loss().data) < float(before.data)
    assert decreased >= 95


def test_labels():
    class P:
        def __init__(self, label):
            self.label = label

    np.testing.assert_array_equal(labels_of([P("match"), P("nonmatch_random"), P("nonmatch_skilled")], np.float32),
                                  [1, 0, 0])


@pytest.mark.slow
def test_ten_subject_run_lowers_loss():
    ds = generate_synthetic_dataset(10, 6, 3, seed=5)
    tr, va = split(ds, 7)
    log = []
    train(ModelConfig(variant="vanilla"), tr, va,
          TrainHyper(max_epochs=20, pairs_per_epoch=128, batch=32, patience=20, seed=0),
          preparer=PairPreparer(threads=1), on_epoch=log.append)
    assert len(log) == 20
    assert log[-1]["loss"] < log[0]["loss"]
