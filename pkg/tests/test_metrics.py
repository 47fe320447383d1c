import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinflow.errors import ValidationError
from kinflow.metrics import average_ranks, evaluate, micro_auc, roc_points
from kinflow.scoring import ScoredVideo
from kinflow.skeleton_data import VideoLabels


def pairwise_auc(scores, labels):
    """O(P*N) oracle: wins plus half-ties over all positive/negative pairs."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (pos.size * neg.size)


def test_average_ranks_with_ties():
    np.testing.assert_array_equal(average_ranks(np.array([10.0, 20.0, 20.0, 30.0])),
                                  [1.0, 2.5, 2.5, 4.0])


def test_perfect_separation_is_one():
    scores = np.array([0.1, 0.2, 0.9, 0.8])
    labels = np.array([0, 0, 1, 1])
    assert micro_auc(scores, labels) == 1.0


def test_reversed_separation_is_zero():
    assert micro_auc(np.array([0.9, 0.8, 0.1, 0.2]), np.array([0, 0, 1, 1])) == 0.0


def test_all_ties_is_half():
    assert micro_auc(np.ones(10), np.array([0, 1] * 5)) == 0.5


def test_single_class_rejected():
    with pytest.raises(ValidationError, match="one class"):
        micro_auc(np.arange(4.0), np.zeros(4, dtype=int))
    with pytest.raises(ValidationError, match="one class"):
        micro_auc(np.arange(4.0), np.ones(4, dtype=int))


def test_matches_pairwise_oracle_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, size=n)
        if labels.sum() in (0, n):
            labels[0] = 1 - labels[0]
        # quantized scores force plenty of ties
        scores = np.round(rng.normal(size=n) * 2) / 2
        assert micro_auc(scores, labels) == pytest.approx(
            pairwise_auc(scores, labels), abs=1e-12
        )


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(-5, 5)), min_size=2, max_size=60))
def test_hypothesis_pairwise_oracle(pairs):
    labels = np.array([p[0] for p in pairs])
    scores = np.array([float(p[1]) for p in pairs])
    if labels.sum() in (0, labels.size):
        labels[0] = 1 - labels[0]
    assert micro_auc(scores, labels) == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)


def test_invariant_under_strictly_increasing_transform():
    rng = np.random.default_rng(1)
    scores = rng.normal(size=100)
    labels = rng.integers(0, 2, size=100)
    labels[0], labels[1] = 0, 1
    base = micro_auc(scores, labels)
    assert micro_auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
    assert micro_auc(3.0 * scores + 7.0, labels) == pytest.approx(base, abs=1e-12)


def test_negation_symmetry_for_tie_free_scores():
    rng = np.random.default_rng(2)
    scores = rng.permutation(100).astype(float)  # distinct values
    labels = rng.integers(0, 2, size=100)
    labels[0], labels[1] = 0, 1
    assert micro_auc(scores, labels) + micro_auc(-scores, labels) == pytest.approx(1.0, abs=1e-12)


def test_concatenation_order_invariance():
    rng = np.random.default_rng(3)
    s1, l1 = rng.normal(size=30), rng.integers(0, 2, size=30)
    s2, l2 = rng.normal(size=40), rng.integers(0, 2, size=40)
    l1[0], l2[0] = 1, 0
    ab = micro_auc(np.concatenate([s1, s2]), np.concatenate([l1, l2]))
    ba = micro_auc(np.concatenate([s2, s1]), np.concatenate([l2, l1]))
    assert ab == pytest.approx(ba, abs=1e-15)


def test_roc_points_monotone_and_bounded():
    rng = np.random.default_rng(4)
    scores = np.round(rng.normal(size=50), 1)
    labels = rng.integers(0, 2, size=50)
    labels[0], labels[1] = 0, 1
    pts = roc_points(scores, labels)
    assert (np.diff(pts[:, 0]) >= 0).all() and (np.diff(pts[:, 1]) >= 0).all()
    assert pts[0, 0] == 0.0 and pts[0, 1] == 0.0
    assert pts[-1, 0] == 1.0 and pts[-1, 1] == 1.0


# --- evaluate -------------------------------------------------------------------

def scored_video(vid, normality):
    arr = np.asarray(normality, dtype=float)
    return ScoredVideo(vid, arr, np.ones(arr.size, dtype=bool))


def test_evaluate_single_video_matches_direct_auc():
    normality = np.array([-1.0, -1.0, -9.0, -8.0])
    labels = VideoLabels("v1", np.array([0, 0, 1, 1]))
    report = evaluate({"v1": scored_video("v1", normality)}, [labels])
    assert report.micro_auc == micro_auc(-normality, labels.labels)
    assert report.micro_auc == 1.0
    assert report.n_frames == 4 and report.n_positive == 2 and report.n_negative == 2
    assert report.per_video_auc["v1"] == 1.0


def test_evaluate_two_videos_equals_concatenation():
    rng = np.random.default_rng(5)
    n1, n2 = 25, 35
    s1, s2 = rng.normal(size=n1), rng.normal(size=n2)
    y1, y2 = rng.integers(0, 2, size=n1), rng.integers(0, 2, size=n2)
    y1[0], y2[0] = 1, 0
    report = evaluate(
        {"a": scored_video("a", s1), "b": scored_video("b", s2)},
        [VideoLabels("a", y1), VideoLabels("b", y2)],
    )
    direct = micro_auc(np.concatenate([-s1, -s2]), np.concatenate([y1, y2]))
    assert report.micro_auc == pytest.approx(direct, abs=1e-15)


def test_evaluate_all_normal_rejected():
    labels = [VideoLabels("v", np.zeros(5, dtype=int))]
    with pytest.raises(ValidationError, match="one class"):
        evaluate({"v": scored_video("v", np.zeros(5))}, labels)


def test_evaluate_missing_video_rejected():
    labels = [VideoLabels("v", np.array([0, 1]))]
    with pytest.raises(ValidationError, match="no scores"):
        evaluate({}, labels)


def test_evaluate_length_mismatch_rejected():
    labels = [VideoLabels("v", np.array([0, 1, 0]))]
    with pytest.raises(ValidationError, match="scored frames"):
        evaluate({"v": scored_video("v", np.zeros(2))}, labels)


def test_evaluate_per_video_diagnostic_none_for_one_class():
    labels = [VideoLabels("a", np.array([0, 1])), VideoLabels("b", np.array([0, 0]))]
    scored = {"a": scored_video("a", [-1.0, -5.0]), "b": scored_video("b", [-1.0, -1.0])}
    report = evaluate(scored, labels)
    assert report.per_video_auc["a"] == 1.0
    assert report.per_video_auc["b"] is None
