import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hosynth.ccv_space import (FeedbackRecord, TripletIndex, WeightMap, apply_epoch_feedback,
                               build_space, load_weights, probabilities, probability_of,
                               sample_triplets, save_weights, weight_update)
from hosynth.errors import FormatError, InvalidArgument


def test_build_space_sizes():
    s = build_space(20, 100, (12, 24))
    assert s.dims == (20, 100, 288) and s.size == 576_000
    assert s.weights.weights.size == 576_000
    one = build_space(1, 1, (1, 1))
    assert one.size == 1
    small = build_space(2, 3, (2, 2))
    assert small.size == 24 and small.weights.weights.sum() == 24.0
    with pytest.raises(InvalidArgument):
        build_space(0, 3, (2, 2))
    with pytest.raises(InvalidArgument):
        build_space(2, 3, (2, 0))


def test_probability_of_examples():
    s = build_space(20, 100, (12, 24))
    assert probability_of(s.weights, (3, 50, 100)) == 1.0 / 576_000
    w = WeightMap((3, 1, 1), np.array([2.0, 1.0, 1.0]))
    assert [probability_of(w, (i, 0, 0)) for i in range(3)] == [0.5, 0.25, 0.25]
    with pytest.raises(InvalidArgument):
        probability_of(w, (3, 0, 0))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e-3, 1e3, allow_nan=False), min_size=1, max_size=60))
def test_probability_matches_separate_normalisation(ws):
    w = WeightMap((len(ws), 1, 1), np.array(ws))
    total = 0.0
    for x in ws:
        total += x
    for i, x in enumerate(ws):
        assert probability_of(w, (i, 0, 0)) == pytest.approx(x / total, rel=1e-12)
    assert abs(probabilities(w).sum() - 1.0) < 1e-9
    # larger weight -> larger first-draw probability
    p = probabilities(w).reshape(-1)
    order = np.argsort(ws, kind="stable")
    assert np.all(np.diff(p[order]) >= 0)


def test_sample_degenerate_support(rng):
    w = WeightMap((3, 1, 1), np.array([1.0, 0.0, 0.0]))
    for _ in range(50):
        assert sample_triplets(w, 1, rng) == [TripletIndex(0, 0, 0)]


def test_sample_exhaustion_is_permutation(rng):
    w = WeightMap.uniform((2, 3, 4))
    out = sample_triplets(w, 24, rng)
    assert sorted(out) == sorted(TripletIndex(a, b, c) for a in range(2) for b in range(3)
                                 for c in range(4))
    with pytest.raises(InvalidArgument):
        sample_triplets(w, 25, rng)


def test_sample_more_than_positive_support(rng):
    w = WeightMap((3, 1, 1), np.array([1.0, 0.0, 2.0]))
    with pytest.raises(InvalidArgument):
        sample_triplets(w, 3, rng)


def test_sample_frequency_matches_multinomial():
    rng = np.random.default_rng(5)
    w = WeightMap((2, 1, 1), np.array([3.0, 1.0]))
    hits = sum(sample_triplets(w, 1, rng)[0].object_id == 0 for _ in range(100_000))
    assert abs(hits / 100_000 - 0.75) <= 0.01


def test_sample_is_deterministic():
    w = WeightMap((4, 5, 6), np.random.default_rng(0).uniform(0.1, 2.0, (4, 5, 6)))
    a = sample_triplets(w, 60, np.random.default_rng(9))
    b = sample_triplets(w, 60, np.random.default_rng(9))
    assert a == b and len(set(a)) == 60


def test_sample_does_not_modify_map(rng):
    w = WeightMap.uniform((2, 2, 2))
    before = w.weights.copy()
    sample_triplets(w, 8, rng)
    assert np.array_equal(w.weights, before)


def test_weight_update_endpoints():
    assert weight_update(0.5, 0.1, 0.5) == 2.0
    assert weight_update(0.1, 0.1, 0.5) == 2.0 / 3.0
    assert weight_update(0.3, 0.1, 0.5) == 1.0
    assert weight_update(0.2, 0.2, 0.2) == 1.0
    with pytest.raises(InvalidArgument):
        weight_update(0.2, 0.3, 0.1)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(1e-6, 10))
def test_weight_update_monotone(a, b, span):
    e_min, e_max = 1.0, 1.0 + span
    x, y = sorted((e_min + a * span, e_min + b * span))
    fx, fy = weight_update(x, e_min, e_max), weight_update(y, e_min, e_max)
    assert 2.0 / 3.0 - 1e-12 <= fx <= fy <= 2.0 + 1e-12
    if y > x:
        assert fy > fx


def test_apply_feedback_examples():
    w = WeightMap.uniform((3, 1, 1))
    recs = [FeedbackRecord(TripletIndex(0, 0, 0), 0.4), FeedbackRecord(TripletIndex(1, 0, 0), 0.1)]
    out = apply_epoch_feedback(w, recs)
    assert out.weights[0, 0, 0] == 2.0
    assert out.weights[1, 0, 0] == 2.0 / 3.0
    assert out.weights[2, 0, 0] == 1.0
    assert np.all(w.weights == 1.0)  # input untouched

    w2 = WeightMap((2, 1, 1), np.array([1.5, 1.0]))
    out2 = apply_epoch_feedback(w2, [FeedbackRecord(TripletIndex(0, 0, 0), 1.0),
                                     FeedbackRecord(TripletIndex(1, 0, 0), 0.0)])
    assert out2.weights[0, 0, 0] == 2.0


def test_apply_feedback_errors():
    w = WeightMap.uniform((2, 1, 1))
    r = FeedbackRecord(TripletIndex(0, 0, 0), 0.1)
    with pytest.raises(InvalidArgument):
        apply_epoch_feedback(w, [r, r])
    with pytest.raises(InvalidArgument):
        apply_epoch_feedback(w, [])
    with pytest.raises(InvalidArgument):
        apply_epoch_feedback(w, [FeedbackRecord(TripletIndex(0, 0, 0), -1.0)])


def test_degenerate_epoch_is_neutral():
    w = WeightMap((3, 1, 1), np.array([0.5, 1.2, 1.9]))
    recs = [FeedbackRecord(TripletIndex(i, 0, 0), 0.07) for i in range(3)]
    assert np.array_equal(apply_epoch_feedback(w, recs).weights, w.weights)


def test_clamp_holds_over_random_epochs():
    rng = np.random.default_rng(3)
    w = WeightMap.uniform((4, 5, 6))
    for _ in range(100):
        picks = sample_triplets(w, 40, rng)
        recs = [FeedbackRecord(t, float(e)) for t, e in zip(picks, rng.lognormal(0, 1, 40))]
        w = apply_epoch_feedback(w, recs)
        assert w.weights.min() >= 0.1 and w.weights.max() <= 2.0


def test_snapshot_round_trip(tmp_path):
    w = WeightMap((2, 3, 4), np.random.default_rng(1).uniform(0.1, 2, (2, 3, 4)))
    path = tmp_path / "w.ccvw"
    save_weights(path, w)
    blob = path.read_bytes()
    assert blob[:4] == b"CCVW" and blob[4] == 1
    assert struct.unpack("<QQQ", blob[5:29]) == (2, 3, 4)
    assert len(blob) == 29 + 8 * 24
    back = load_weights(path)
    assert back.dims == w.dims and np.array_equal(back.weights, w.weights)


def test_snapshot_validation(tmp_path):
    w = WeightMap.uniform((1, 2, 3))
    path = tmp_path / "w.ccvw"
    save_weights(path, w)
    blob = path.read_bytes()
    for bad in (b"XXXX" + blob[4:], blob[:4] + b"\x02" + blob[5:], blob[:-8], blob[:10]):
        path.write_bytes(bad)
        with pytest.raises(FormatError):
            load_weights(path)
