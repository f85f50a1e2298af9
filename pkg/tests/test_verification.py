import numpy as np
import pytest

from featmimic.harness import build_gallery
from featmimic.network import features
from featmimic.verification import (
    GalleryTemplate,
    distance,
    enroll,
    roc,
    score_all,
    threshold_at_far,
    verify,
)


@pytest.fixture(scope="module")
def fixture_scores(bundled_cfg):
    gallery = build_gallery(bundled_cfg)
    probes = [
        (identity, features(bundled_cfg.net, image, bundled_cfg.descriptor_tap))
        for identity, image in bundled_cfg.probes
    ]
    positives, negatives = score_all(probes, gallery, "euclidean")
    return gallery, probes, positives, negatives


def test_distance_values():
    assert distance([0.0, 0.0], [3.0, 4.0]) == 5.0
    assert distance([1.0, 0.0], [0.0, 1.0], "cosine") == pytest.approx(1.0)
    assert distance([2.0, 5.0], [2.0, 5.0], "cosine") == pytest.approx(0.0, abs=1e-12)
    assert distance([1.0, 0.0], [-1.0, 0.0], "cosine") == pytest.approx(2.0)


def test_distance_rejects_bad_inputs():
    with pytest.raises(ValueError, match="zero"):
        distance([0.0, 0.0], [1.0, 2.0], "cosine")
    with pytest.raises(ValueError, match="mismatch"):
        distance([1.0], [1.0, 2.0])
    with pytest.raises(ValueError, match="kind"):
        distance([1.0], [2.0], "manhattan")


def test_distance_scaling_behaviour():
    rng = np.random.default_rng(0)
    for _ in range(5):
        a = rng.normal(0.0, 1.0, 16)
        b = rng.normal(0.0, 1.0, 16)
        c = float(rng.uniform(0.5, 20.0))
        assert distance(c * a, c * b) == pytest.approx(c * distance(a, b), rel=1e-9)
        assert distance(c * a, b, "cosine") == pytest.approx(
            distance(a, b, "cosine"), abs=1e-6
        )


def test_enroll_single_descriptor_is_the_template():
    desc = np.arange(8, dtype=np.float32)
    template = enroll("alice", [desc])
    assert np.array_equal(template.mean_descriptor, desc)
    assert template.enrollment_count == 1
    assert template.identity == "alice"


def test_enroll_averages_descriptors():
    template = enroll("bob", [[0.0, 10.0], [2.0, 30.0]])
    assert np.array_equal(template.mean_descriptor, [1.0, 20.0])
    assert template.enrollment_count == 2


def test_enroll_opposite_descriptors_defeat_cosine_matching():
    template = enroll("carol", [[1.0, 2.0], [-1.0, -2.0]])
    assert np.array_equal(template.mean_descriptor, [0.0, 0.0])
    assert distance([1.0, 2.0], template.mean_descriptor) == pytest.approx(np.sqrt(5.0))
    with pytest.raises(ValueError, match="zero"):
        distance([1.0, 2.0], template.mean_descriptor, "cosine")


def test_enroll_rejects_empty_or_mismatched():
    with pytest.raises(ValueError, match="no descriptors"):
        enroll("dave", [])
    with pytest.raises(ValueError, match="mismatch"):
        enroll("dave", [[1.0, 2.0], [1.0]])
    with pytest.raises(ValueError, match="enrollment_count"):
        GalleryTemplate("dave", np.zeros(4), 0)


def test_score_all_splits_genuine_and_impostor():
    gallery = [enroll("a", [[0.0, 0.0]]), enroll("b", [[10.0, 0.0]])]
    probes = [("a", [3.0, 4.0]), ("b", [10.0, 1.0]), ("c", [5.0, 0.0])]
    positives, negatives = score_all(probes, gallery)
    assert positives.tolist() == [5.0, 1.0]
    assert negatives.tolist() == [
        pytest.approx(np.sqrt(65.0)),
        pytest.approx(np.sqrt(101.0)),
        5.0,
        5.0,
    ]


def test_fixture_scores_have_expected_counts(fixture_scores, bundled_cfg):
    gallery, probes, positives, negatives = fixture_scores
    assert positives.size == len(probes)
    assert negatives.size == len(probes) * (len(gallery) - 1)


def test_fixture_genuine_scores_sit_below_impostor_scores(fixture_scores):
    _, _, positives, negatives = fixture_scores
    assert positives.mean() < negatives.mean()
    assert np.median(positives) < np.median(negatives)


def test_roc_perfect_separation_reaches_tar_one_at_far_zero():
    curve = roc([1.0, 2.0], [10.0, 20.0])
    i = np.searchsorted(curve.thresholds, 10.0)
    assert curve.far[i] == 0.0
    assert curve.tar[i] == 1.0


def test_roc_identical_score_lists_track_the_diagonal():
    scores = [1.0, 2.0, 2.0, 5.0]
    curve = roc(scores, scores)
    assert np.array_equal(curve.far, curve.tar)


def test_roc_matches_brute_force_recount():
    rng = np.random.default_rng(1)
    for _ in range(5):
        pos = np.round(rng.uniform(0.0, 20.0, 40) * 2.0) / 2.0
        neg = np.round(rng.uniform(5.0, 40.0, 60) * 2.0) / 2.0
        curve = roc(pos, neg)
        for t, far, tar in zip(curve.thresholds, curve.far, curve.tar):
            assert far == np.sum(neg < t) / neg.size
            assert tar == np.sum(pos < t) / pos.size


def test_roc_is_monotone_and_ends_at_one():
    rng = np.random.default_rng(2)
    curve = roc(rng.uniform(0, 10, 30), rng.uniform(5, 15, 30))
    assert np.all(np.diff(curve.thresholds) > 0)
    assert np.all(np.diff(curve.far) >= 0)
    assert np.all(np.diff(curve.tar) >= 0)
    assert curve.thresholds[-1] == np.inf
    assert curve.far[-1] == 1.0
    assert curve.tar[-1] == 1.0


def test_roc_requires_both_score_kinds():
    with pytest.raises(ValueError, match="at least one"):
        roc([], [1.0])
    with pytest.raises(ValueError, match="at least one"):
        roc([1.0], [])


def test_threshold_at_far_on_a_known_ladder():
    negatives = np.arange(1.0, 1001.0)
    assert threshold_at_far(negatives, 0.001) == 2.0
    assert threshold_at_far(negatives, 0.003) == 4.0


def test_threshold_at_far_with_duplicated_minimum():
    negatives = [3.0, 3.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0]
    assert threshold_at_far(negatives, 0.1) == 3.0


def test_threshold_at_far_requires_enough_negatives():
    with pytest.raises(ValueError, match="10"):
        threshold_at_far([1.0, 2.0, 3.0, 4.0, 5.0], 0.1)
    with pytest.raises(ValueError, match="far_target"):
        threshold_at_far(np.arange(100.0), 0.0)
    with pytest.raises(ValueError, match="far_target"):
        threshold_at_far(np.arange(100.0), 1.0)


def test_threshold_at_far_is_the_largest_sound_candidate():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(60, 200))
        negatives = np.round(rng.uniform(0.0, 50.0, n), 1)
        far_target = float(rng.choice([0.02, 0.05, 0.1]))
        tau = threshold_at_far(negatives, far_target)
        allowed = int(np.floor(far_target * n + 1e-9))
        assert np.sum(negatives < tau) <= allowed
        candidates = np.unique(negatives)
        idx = int(np.searchsorted(candidates, tau))
        assert candidates[idx] == tau
        if idx + 1 < candidates.size:
            assert np.sum(negatives < candidates[idx + 1]) > allowed


def test_verify_is_strict_at_the_threshold():
    template = enroll("eve", [[0.0, 0.0]])
    accepted, d = verify([3.0, 4.0], template, 5.0)
    assert not accepted
    assert d == 5.0
    accepted, d = verify([3.0, 4.0], template, 5.0 + 1e-7)
    assert accepted


def test_verify_supports_cosine_distances():
    template = enroll("frank", [[1.0, 0.0]])
    accepted, d = verify([0.9, 0.1], template, 0.05, "cosine")
    assert accepted
    assert d == pytest.approx(1.0 - 0.9 / np.hypot(0.9, 0.1))
