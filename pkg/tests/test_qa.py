import numpy as np
import pytest
from hypothesis import given, strategies as st

from rtcine import qa
from rtcine.volume import LV, RV


def _septum_slice(blood=1.0, myo=0.2, width=6):
    """Two blood pools separated by a vertical myocardial wall."""
    img = np.full((40, 60), 0.05)
    lab = np.zeros((40, 60), dtype=np.uint8)
    img[10:30, 10:50] = blood
    wall = slice(30 - width // 2, 30 + width // 2)
    img[10:30, wall] = myo
    lab[10:30, 10:30 - width // 2] = LV
    lab[10:30, 30 + width // 2:50] = RV
    return img, lab


def test_profile_crosses_septum():
    img, lab = _septum_slice()
    p = qa.intensity_profile(img, lab, pixel_mm=1.5)
    assert p.samples.max() == pytest.approx(1.0)
    assert p.samples.min() == pytest.approx(0.2)
    assert p.spacing_mm == 0.75
    assert qa.contrast(p) == pytest.approx(5.0)


def test_profile_requires_both_ventricles():
    img, lab = _septum_slice()
    lab[lab == RV] = 0
    with pytest.raises(ValueError):
        qa.intensity_profile(img, lab)


def test_edge_sharpness_step_and_ramp():
    assert qa.edge_sharpness(np.array([0, 0, 0, 1, 1, 1.0])) == 1.0
    n = 11
    assert qa.edge_sharpness(np.linspace(3, 7, n)) == pytest.approx(1 / (n - 1))
    assert qa.edge_sharpness(np.full(5, 2.0)) == 0.0


def test_blurred_wall_is_less_sharp():
    from scipy import ndimage

    img, lab = _septum_slice()
    sharp = qa.edge_sharpness(qa.intensity_profile(img, lab))
    blurred = qa.edge_sharpness(qa.intensity_profile(ndimage.gaussian_filter(img, 2), lab))
    assert blurred < sharp


@given(st.lists(st.floats(0.01, 100), min_size=2, max_size=30),
       st.floats(0.1, 10), st.floats(-5, 5))
def test_edge_sharpness_affine_invariant(vals, scale, shift):
    s = np.array(vals)
    a = qa.edge_sharpness(s)
    assert qa.edge_sharpness(scale * s + shift) == pytest.approx(a, abs=1e-9)
    assert 0 <= a <= 1


@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=30), st.floats(0.1, 10))
def test_contrast_scale_invariant(vals, k):
    s = np.array(vals)
    assert qa.contrast(k * s) == pytest.approx(qa.contrast(s), rel=1e-9)
    assert qa.contrast(s) >= 1


def test_contrast_not_shift_invariant():
    s = np.array([0.2, 1.0, 0.5])
    assert qa.contrast(s + 1.0) != pytest.approx(qa.contrast(s))


def test_mse_of_inverted_binary_image(rng):
    a = (rng.random((8, 8, 8)) > 0.5).astype(float)
    assert qa.mse(a, 1 - a) == 1.0
    b = rng.random((8, 8, 8))
    assert qa.mse(a, b) == qa.mse(b, a)


def test_contrast_examples():
    assert qa.contrast(np.array([0.2, 1.7, 0.5])) == pytest.approx(8.5)
    assert qa.contrast(np.full(4, 3.0)) == 1.0
    with pytest.raises(ValueError):
        qa.contrast(np.array([0.0, 1.0]))


def test_image_metrics_identity_and_noise(rng):
    a = rng.random((16, 16, 16))
    m = qa.image_metrics(a, a)
    assert m["ssim"] == pytest.approx(1.0) and m["mse"] == 0 and m["psnr"] == float("inf")
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    assert qa.mse(a, b) == pytest.approx(np.mean((a - b) ** 2))
    assert qa.psnr(a, b) == pytest.approx(-10 * np.log10(qa.mse(a, b)))
    assert qa.ssim(a, b) < 1


def test_psnr_known_value():
    a = np.zeros((4, 4, 4))
    b = np.full((4, 4, 4), 0.1)
    assert qa.psnr(a, b) == pytest.approx(20.0)


def test_ssim_small_volume_and_mismatch():
    a = np.random.default_rng(0).random((5, 8, 8))
    assert qa.ssim(a, a) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        qa.ssim(a, a[:4])
