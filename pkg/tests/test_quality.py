import json

import numpy as np
import pytest

from featmimic.modelio import read_image
from featmimic.quality import (
    EccConfig,
    ecc_align,
    pass_score,
    perturbation_norms,
    ssim,
    to_grayscale,
)
from synthetic import smooth_field, translation_pair


def _rho(a, b):
    az = a - a.mean()
    bz = b - b.mean()
    return float((az * bz).sum() / np.sqrt((az * az).sum() * (bz * bz).sum()))


def test_grayscale_conversion():
    white = np.full((3, 12, 12), 255.0, dtype=np.float32)
    assert np.allclose(to_grayscale(white), 255.0)
    red = np.zeros((3, 12, 12), dtype=np.float32)
    red[0] = 255.0
    assert to_grayscale(red) == pytest.approx(np.full((12, 12), 76.245))
    mono = np.arange(144.0).reshape(1, 12, 12)
    assert np.array_equal(to_grayscale(mono), mono[0])
    with pytest.raises(ValueError):
        to_grayscale(np.zeros((2, 12, 12)))


def test_ssim_identical_images_score_exactly_one():
    img = smooth_field(0, 32)
    assert ssim(img, img) == 1.0


def test_ssim_detects_luminance_and_contrast_changes():
    img = smooth_field(1, 32)
    assert ssim(np.full((16, 16), 100.0), np.full((16, 16), 150.0)) < 1.0
    squashed = 0.5 * (img - img.mean()) + img.mean()
    assert ssim(img, squashed) < 1.0


def test_ssim_is_symmetric():
    a = smooth_field(2, 32)
    b = smooth_field(3, 32)
    assert ssim(a, b) == ssim(b, a)


def test_ssim_matches_reference_implementation():
    skimage_metrics = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(4)
    for _ in range(5):
        a = rng.uniform(0.0, 255.0, (32, 32))
        b = np.clip(a + rng.normal(0.0, 20.0, (32, 32)), 0.0, 255.0)
        expected = skimage_metrics.structural_similarity(
            a,
            b,
            data_range=255.0,
            gaussian_weights=True,
            sigma=1.5,
            use_sample_covariance=False,
        )
        assert ssim(a, b) == pytest.approx(expected, abs=1e-4)


def test_ssim_rejects_undersized_or_mismatched_images():
    with pytest.raises(ValueError, match="11"):
        ssim(np.zeros((10, 10)), np.zeros((10, 10)))
    with pytest.raises(ValueError, match="shape"):
        ssim(np.zeros((12, 12)), np.zeros((12, 13)))


def test_ecc_identity_alignment():
    img = smooth_field(5, 32)
    res = ecc_align(img, img)
    assert not res.fallback
    assert np.allclose(res.transform.matrix, np.eye(3), atol=1e-3)
    assert np.array_equal(res.aligned, img)
    assert res.correlation == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("shift", [(2, 0), (-1, 3)])
def test_ecc_recovers_integer_translations(shift):
    dx, dy = shift
    moving, fixed = translation_pair(6, dx, dy)
    res = ecc_align(moving, fixed, EccConfig(model="translation"))
    assert not res.fallback
    assert res.transform.matrix[0, 2] == pytest.approx(dx, abs=0.1)
    assert res.transform.matrix[1, 2] == pytest.approx(dy, abs=0.1)


def test_ecc_never_correlates_worse_than_identity():
    big = smooth_field(7, 64)
    moving = big[16:48, 16:48]
    fixed = big[18:50, 17:49]
    res = ecc_align(moving, fixed)
    assert res.correlation >= _rho(moving, fixed) - 1e-9
    assert _rho(res.aligned, fixed) == pytest.approx(res.correlation, abs=1e-9)


def test_ecc_zero_variance_falls_back_to_identity():
    flat = np.full((16, 16), 50.0)
    textured = smooth_field(8, 16)
    res = ecc_align(flat, textured)
    assert res.fallback
    assert np.array_equal(res.transform.matrix, np.eye(3))
    assert np.array_equal(res.aligned, flat)


def test_ecc_config_validation():
    with pytest.raises(ValueError, match="model"):
        EccConfig(model="rigid")
    with pytest.raises(ValueError, match="iterations"):
        EccConfig(max_iterations=0)
    with pytest.raises(ValueError, match="epsilon"):
        EccConfig(epsilon=0.0)
    with pytest.raises(ValueError, match="shape"):
        ecc_align(np.zeros((12, 12)), np.zeros((12, 13)))


def test_pass_identical_images_score_exactly_one(bundled_cfg):
    image = bundled_cfg.probes[0][1]
    res = pass_score(image, image)
    assert res.score == 1.0
    assert not res.align_fallback


def test_pass_alignment_beats_raw_ssim_on_a_shifted_copy():
    big = smooth_field(9, 64)
    original = big[16:48, 16:48]
    shifted = big[17:49, 16:48]
    raw = ssim(shifted, original)
    res = pass_score(shifted, original)
    assert res.score >= raw
    assert res.score > 0.9


def test_pass_matches_frozen_golden_pair(tests_data):
    golden = json.loads((tests_data / "golden_pass.json").read_text())
    origin = read_image(tests_data / "golden_origin.pgm")
    perturbed = read_image(tests_data / "golden_perturbed.pgm")
    res = pass_score(perturbed, origin)
    assert res.score == pytest.approx(golden["pass_score"], abs=1e-3)
    assert res.align_fallback == golden["align_fallback"]
    l2, linf = perturbation_norms(perturbed, origin)
    assert l2 == pytest.approx(golden["l2"], rel=1e-9)
    assert linf == golden["linf"]


def test_pass_flags_alignment_fallback_but_still_scores():
    flat = np.full((1, 16, 16), 80.0, dtype=np.float32)
    other = np.full((1, 16, 16), 90.0, dtype=np.float32)
    res = pass_score(flat, other)
    assert res.align_fallback
    assert res.score == pytest.approx(ssim(flat[0], other[0]))


def test_pass_rejects_mismatched_shapes():
    with pytest.raises(ValueError, match="shape"):
        pass_score(np.zeros((1, 12, 12)), np.zeros((1, 12, 13)))


def test_perturbation_norms_values():
    a = np.zeros((1, 10, 10), dtype=np.float32)
    assert perturbation_norms(a, a) == (0.0, 0.0)
    b = a.copy()
    b[0, 3, 4] = 22.0
    assert perturbation_norms(b, a) == (22.0, 22.0)
    c = np.ones((1, 10, 10), dtype=np.float32)
    l2, linf = perturbation_norms(c, a)
    assert l2 == pytest.approx(10.0)
    assert linf == 1.0


def test_perturbation_norms_triangle_inequality():
    rng = np.random.default_rng(10)
    for _ in range(10):
        a, b, c = rng.uniform(0, 255, (3, 1, 8, 8))
        ab, _ = perturbation_norms(a, b)
        bc, _ = perturbation_norms(b, c)
        ac, _ = perturbation_norms(a, c)
        assert ac <= ab + bc + 1e-9
