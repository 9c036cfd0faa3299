import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_eer
from sigver.evaluation import (
    PairSpec,
    ProtocolError,
    ProtocolReport,
    ScoreSet,
    build_comparisons,
    check_disjoint,
    compute_eer,
    compute_scores,
    det_curve,
    report_from_scores,
    run_protocol,
)
from sigver.model import ModelConfig, SiameseModel
from sigver.pipeline import PairPreparer
from sigver.signature_io import generate_synthetic_dataset

grid_scores = st.lists(st.integers(1, 999).map(lambda k: k / 1000), min_size=1, max_size=25)


def test_separable():
    r = compute_eer([0.9, 0.8, 0.7], [0.1, 0.2, 0.3])
    assert r.eer == 0.0
    assert 0.3 < r.threshold <= 0.7


def test_indistinguishable():
    assert compute_eer([0.5], [0.5]).eer == 0.5


def test_small_example_matches_oracle():
    g, i = [0.9, 0.6, 0.4], [0.5, 0.3, 0.2]
    eer, t = brute_force_eer(g, i)
    r = compute_eer(g, i)
    assert (r.eer, r.threshold) == (eer, t)


def test_empty_lists_rejected():
    with pytest.raises(ValueError):
        compute_eer([], [0.2])
    with pytest.raises(ValueError):
        compute_eer([0.2], [])


@settings(max_examples=200, deadline=None)
@given(grid_scores, grid_scores)
def test_matches_oracle(g, i):
    eer, t = brute_force_eer(g, i)
    r = compute_eer(g, i)
    assert r.eer == eer and r.threshold == t


@settings(max_examples=100, deadline=None)
@given(grid_scores, grid_scores)
def test_invariant_under_increasing_transform(g, i):
    f = lambda s: math.exp(3 * s) - 7.0
    assert compute_eer(g, i).eer == compute_eer([f(s) for s in g], [f(s) for s in i]).eer


@settings(max_examples=100, deadline=None)
@given(grid_scores, grid_scores)
def test_swap_and_reflect(g, i):
    # Reflection can only change which tied threshold the lowest-threshold
    # rule picks, so the reflected EER is one of the tied midpoints.
    flipped = compute_eer([1 - s for s in i], [1 - s for s in g]).eer
    c = det_curve(g, i)
    gaps = np.abs(np.subtract(c.far, c.frr))
    tied = {(c.far[k] + c.frr[k]) / 2 for k in np.flatnonzero(gaps == gaps.min())}
    assert min(abs(flipped - v) for v in tied) <= 1e-12
    if len(tied) == 1:
        assert abs(flipped - compute_eer(g, i).eer) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(grid_scores, grid_scores)
def test_det_monotone(g, i):
    c = det_curve(g, i)
    assert np.all(np.diff(c.far) <= 0) and np.all(np.diff(c.frr) >= 0)
    assert np.all(np.diff(c.thresholds) > 0)
    assert c.points[0] == (1.0, 0.0) and c.points[-1] == (0.0, 1.0)


def test_det_csv():
    text = det_curve([0.9], [0.1]).to_csv()
    lines = text.splitlines()
    assert lines[0] == "far,frr,threshold"
    assert len(lines) == 1 + 4


def test_report_pools_impostors():
    rng = np.random.default_rng(0)
    s = ScoreSet(list(rng.uniform(0.3, 1, 20)), list(rng.uniform(0, 0.6, 15)), list(rng.uniform(0.2, 0.8, 9)))
    report = report_from_scores(s)
    assert report.eer_overall == brute_force_eer(s.genuine, s.impostor_random + s.impostor_skilled)[0]
    assert report.eer_random == brute_force_eer(s.genuine, s.impostor_random)[0]
    assert report.eer_skilled == brute_force_eer(s.genuine, s.impostor_skilled)[0]
    assert "pooled" in report.meta["overall"]
    assert report.counts == {"genuine": 20, "random": 15, "skilled": 9}


def test_separable_report_all_zero():
    r = report_from_scores(ScoreSet([0.9, 0.8], [0.1], [0.2, 0.3]))
    assert (r.eer_random, r.eer_skilled, r.eer_overall) == (0, 0, 0)


def test_report_json_round_trip(tmp_path):
    r = report_from_scores(ScoreSet([0.9, 0.4, 0.8], [0.1, 0.5], [0.2, 0.85]), meta={"variant": "vanilla"})
    back = ProtocolReport.from_json(r.to_json())
    assert back == r
    written = r.write(tmp_path)
    assert {p.name for p in written} == {"report.json", "det_random.csv", "det_skilled.csv", "det_overall.csv"}
    assert json.loads((tmp_path / "report.json").read_text())["eer_overall"] == r.eer_overall


def test_scoreset_rejects_unknown_label():
    with pytest.raises(ValueError):
        ScoreSet().add("nonmatch_alien", 0.3)


def test_check_disjoint():
    check_disjoint({"a", "b"}, {"c"})
    with pytest.raises(ProtocolError, match="protocol error: overlapping subjects"):
        check_disjoint({"a", "b"}, {"b", "c"})


@pytest.fixture(scope="module")
def small_corpus():
    return generate_synthetic_dataset(3, 3, 2, seed=4)


def test_build_comparisons_respects_pair_semantics(small_corpus):
    comps = build_comparisons(small_corpus, seed=1)
    for c in comps:
        if c.label == "match":
            assert c.enrolled.subject_id == c.questioned.subject_id
            assert c.enrolled.label == c.questioned.label == "genuine"
            assert c.enrolled.key != c.questioned.key
        elif c.label == "nonmatch_random":
            assert c.enrolled.subject_id != c.questioned.subject_id and c.questioned.label == "genuine"
        else:
            assert c.enrolled.subject_id == c.questioned.subject_id
            assert c.questioned.label == "skilled_forgery"
    counts = {lab: sum(c.label == lab for c in comps) for lab in ("match", "nonmatch_random", "nonmatch_skilled")}
    assert counts == {"match": 6, "nonmatch_random": 6, "nonmatch_skilled": 6}
    assert [c.key for c in build_comparisons(small_corpus, seed=1)] == [c.key for c in comps]


def test_compute_scores_routing_and_duplicates(small_corpus):
    genuine = [s for s in small_corpus if s.label == "genuine"]
    forged = [s for s in small_corpus if s.label != "genuine"]
    g0 = [s for s in genuine if s.subject_id == genuine[0].subject_id]
    other = [s for s in genuine if s.subject_id != genuine[0].subject_id]
    f0 = [s for s in forged if s.subject_id == genuine[0].subject_id]
    comps = [PairSpec(g0[0], g0[1], "match"), PairSpec(g0[0], g0[2], "match"), PairSpec(g0[0], g0[1], "match"),
             PairSpec(g0[0], other[0], "nonmatch_random"), PairSpec(g0[0], other[1], "nonmatch_random"),
             PairSpec(g0[0], f0[0], "nonmatch_skilled")]
    model = SiameseModel(ModelConfig.reduced("vanilla"))
    scores = compute_scores(model, comps, PairPreparer(length=128, threads=1), batch=4)
    assert scores.sizes() == (3, 2, 1)
    assert scores.genuine[0] == scores.genuine[2]
    every = scores.genuine + scores.impostor_random + scores.impostor_skilled
    assert all(0 < s < 1 for s in every)


def test_run_protocol_rejects_overlap(small_corpus):
    model = SiameseModel(ModelConfig.reduced("vanilla"))
    comps = build_comparisons(small_corpus)
    with pytest.raises(ProtocolError):
        run_protocol(model, comps, PairPreparer(length=128), train_subjects={small_corpus[0].subject_id})
