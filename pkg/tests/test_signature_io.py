import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigver.dtw import dtw
from sigver.features import signature_features
from sigver.signature_io import (
    RawSignature,
    SignatureError,
    format_canonical,
    generate_synthetic_dataset,
    load_dataset,
    parse_signature,
    resample_uniform,
    write_dataset,
    write_signature,
)

HEADER = "x\ty\ttimestamp_ms\tpressure\n"


def write_tsv(tmp_path, rows, name="s.tsv"):
    p = tmp_path / name
    p.write_text(HEADER + "".join("\t".join(str(v) for v in r) + "\n" for r in rows))
    return p


def test_parse_three_points(tmp_path):
    p = write_tsv(tmp_path, [(0, 0, 0, 1), (1, 0, 10, 1), (2, 0, 20, 1)])
    sig = parse_signature(p)
    assert len(sig) == 3
    np.testing.assert_array_equal(sig.x, [0, 1, 2])
    np.testing.assert_array_equal(sig.y, [0, 0, 0])
    np.testing.assert_array_equal(sig.timestamp, [0, 10, 20])
    np.testing.assert_array_equal(sig.pressure, [1, 1, 1])


def test_legacy_button_zero_forces_pen_up(tmp_path):
    p = tmp_path / "u1s1.txt"
    p.write_text("3\n0 0 0 1 0 0 300\n1 1 10 0 0 0 250\n2 2 20 1 0 0 280\n")
    sig = parse_signature(p, "legacy7")
    np.testing.assert_array_equal(sig.pressure, [300, 0, 280])


def test_legacy_count_mismatch(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("4\n0 0 0 1 0 0 3\n1 1 10 1 0 0 3\n")
    with pytest.raises(SignatureError, match="point count"):
        parse_signature(p, "legacy7")


def test_decreasing_timestamp_names_line(tmp_path):
    p = write_tsv(tmp_path, [(0, 0, 0, 1), (1, 0, 10, 1), (2, 0, 5, 1)])
    with pytest.raises(SignatureError, match="non-monotonic timestamp at line 3"):
        parse_signature(p)


@pytest.mark.parametrize("row, msg", [("1\t2\t3\n", "line 2: expected 4 columns"),
                                      ("1\tx\t30\t1\n", "line 2")])
def test_malformed_line_names_line(tmp_path, row, msg):
    p = tmp_path / "m.tsv"
    p.write_text(HEADER + "0\t0\t0\t1\n" + row)
    with pytest.raises(SignatureError, match=msg):
        parse_signature(p)


def test_single_point_rejected(tmp_path):
    with pytest.raises(SignatureError, match="at least 2"):
        parse_signature(write_tsv(tmp_path, [(0, 0, 0, 1)]))


def test_zero_duration_rejected():
    with pytest.raises(SignatureError, match="zero duration"):
        RawSignature([0, 1], [0, 1], [1, 1], [5, 5])


def test_negative_pressure_rejected():
    with pytest.raises(SignatureError):
        RawSignature([0, 1], [0, 1], [1, -1], [0, 10])


finite = st.floats(-1e5, 1e5, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(finite, finite, st.floats(0, 1e4)), min_size=2, max_size=30),
       st.lists(st.integers(1, 50), min_size=29, max_size=29))
def test_canonical_round_trip(tmp_path_factory, rows, gaps):
    t = np.concatenate([[0], np.cumsum(gaps[: len(rows) - 1])]).astype(float)
    x, y, p = (np.array(c) for c in zip(*rows))
    sig = RawSignature(x, y, p, t, subject_id="s", sample_id="a")
    path = tmp_path_factory.mktemp("rt") / "a.tsv"
    write_signature(sig, path)
    back = parse_signature(path, subject_id="s")
    for name in ("x", "y", "pressure", "timestamp"):
        np.testing.assert_allclose(getattr(back, name), getattr(sig, name), rtol=0, atol=5e-7)
    assert format_canonical(back) == path.read_text()


def test_resample_line():
    u = resample_uniform(RawSignature([0, 2], [0, 0], [1, 1], [0, 20]), 100)
    np.testing.assert_array_equal(u.x, [0, 1, 2])
    assert u.length == 3


def test_resample_uniform_input_is_identity():
    rng = np.random.default_rng(3)
    n = 57
    sig = RawSignature(rng.normal(size=n), rng.normal(size=n), rng.uniform(0, 5, n), np.arange(n) * 10.0)
    u = resample_uniform(sig, 100)
    assert u.length == n
    for name in ("x", "y", "pressure"):
        np.testing.assert_allclose(getattr(u, name), getattr(sig, name), rtol=0, atol=1e-12)


def test_resample_matches_piecewise_linear_oracle():
    t = np.array([0, 7, 13, 29, 41, 60, 78, 100], dtype=float)
    sig = RawSignature(t ** 2, t, np.ones_like(t), t)
    u = resample_uniform(sig, 100)
    grid = np.arange(0, 101, 10.0)
    oracle = []
    for g in grid:  # segment search written out independently of np.interp
        k = max(i for i in range(len(t) - 1) if t[i] <= g) if g < t[-1] else len(t) - 2
        w = (g - t[k]) / (t[k + 1] - t[k])
        oracle.append((1 - w) * t[k] ** 2 + w * t[k + 1] ** 2)
    assert u.length == 11
    assert np.max(np.abs(u.x - oracle)) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(20, 100000), st.sampled_from([50.0, 100.0, 200.0]))
def test_resample_length_formula(duration_ms, rate):
    sig = RawSignature([0, 1], [0, 1], [1, 1], [0, duration_ms])
    expected = int(np.floor(round(duration_ms / 1000 * rate, 9))) + 1
    assert resample_uniform(sig, rate).length == expected


def test_resample_below_one_period_rejected():
    with pytest.raises(SignatureError, match="at least 2"):
        resample_uniform(RawSignature([0, 1], [0, 1], [1, 1], [0, 5]), 100)


def test_synthetic_counts():
    ds = generate_synthetic_dataset(2, 3, 2, seed=7)
    assert len(ds) == 10
    assert sum(s.label == "genuine" for s in ds) == 6
    assert sum(s.label == "skilled_forgery" for s in ds) == 4


def test_synthetic_byte_identical(tmp_path):
    a = write_dataset(generate_synthetic_dataset(2, 3, 2, seed=7), tmp_path / "a")
    b = write_dataset(generate_synthetic_dataset(2, 3, 2, seed=7), tmp_path / "b")
    for entry in json.loads(a.read_text()):
        assert (a.parent / entry["path"]).read_bytes() == (b.parent / entry["path"]).read_bytes()
    assert a.read_bytes() == b.read_bytes()


def test_dataset_manifest_round_trip(tmp_path):
    ds = generate_synthetic_dataset(2, 2, 1, seed=3)
    back = load_dataset(write_dataset(ds, tmp_path))
    assert [s.key for s in back] == [s.key for s in ds]
    assert [s.label for s in back] == [s.label for s in ds]


def test_genuine_pairs_cheaper_than_forgeries():
    ds = generate_synthetic_dataset(20, 3, 2, seed=5)
    feats = {s.key: signature_features(s).values for s in ds}
    same, forged = [], []
    for subject in sorted({s.subject_id for s in ds}):
        g = [s for s in ds if s.subject_id == subject and s.label == "genuine"]
        f = [s for s in ds if s.subject_id == subject and s.label != "genuine"]
        for i in range(len(g)):
            for j in range(i + 1, len(g)):
                same.append(dtw(feats[g[i].key], feats[g[j].key]).cost)
            for q in f:
                forged.append(dtw(feats[g[i].key], feats[q.key]).cost)
    assert np.mean(same) < np.mean(forged)
