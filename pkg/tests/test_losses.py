import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rtcine import losses
from rtcine.resp import DeformationField, deformation_field


def _sobel_bruteforce(x, axis):
    """Separable Sobel via explicit neighbour sums on an edge-padded array."""
    pad = np.pad(x, 1, mode="edge")
    out = np.zeros_like(x, dtype=np.float64)
    weights = {-1: 1.0, 0: 2.0, 1: 1.0}
    for offs in itertools.product((-1, 0, 1), repeat=x.ndim):
        if offs[axis] == 0:
            continue
        w = float(offs[axis])
        for ax, o in enumerate(offs):
            if ax != axis:
                w *= weights[o]
        sl = tuple(slice(1 + o, 1 + o + n) for o, n in zip(offs, x.shape))
        out += w * pad[sl]
    return out


def _gmae_bruteforce(a, b):
    return np.mean([np.mean(np.abs(_sobel_bruteforce(a, ax) - _sobel_bruteforce(b, ax)))
                    for ax in range(a.ndim)])


def test_sobel_matches_bruteforce(rng):
    x = rng.random((5, 6, 7))
    for ax, g in enumerate(losses.sobel_gradients(x)):
        np.testing.assert_allclose(g, _sobel_bruteforce(x, ax), atol=1e-12)


def test_gmae_matches_bruteforce(rng):
    a, b = rng.random((6, 5, 4)), rng.random((6, 5, 4))
    assert losses.gmae(a, b) == pytest.approx(_gmae_bruteforce(a, b), rel=1e-12)


def test_combined_is_mae_plus_weighted_gmae(rng):
    a, b = rng.random((8, 8, 8)), rng.random((8, 8, 8))
    expected = np.mean(np.abs(a - b)) + 5.357 * _gmae_bruteforce(a, b)
    assert losses.combined_image_loss(a, b) == pytest.approx(expected, rel=1e-12)


def test_combined_constant_offset_has_no_gradient_term(rng):
    a = rng.random((6, 6, 6))
    assert losses.gmae(a, a + 0.1) == pytest.approx(0.0, abs=1e-12)
    assert losses.combined_image_loss(a, a + 0.1) == pytest.approx(0.1, abs=1e-12)


def test_combined_constructed_value():
    # a tilted plane vs a constant: mae and gmae are both known in closed form
    n = 9
    a = np.zeros((n, n, n))
    b = np.broadcast_to(0.01 * (np.arange(n) - 4.0)[:, None, None], (n, n, n)).copy()
    mae = np.mean(np.abs(b))
    # Sobel of a slope s along axis 0 is 2s*16 inside and s*16 on the two end planes
    g0 = 16 * 0.01 * (2 * (n - 2) + 2) / n
    gm = g0 / 3
    assert losses.combined_image_loss(a, b) == pytest.approx(mae + 5.357 * gm, rel=1e-12)


def test_combined_rejects_bad_inputs(rng):
    with pytest.raises(ValueError):
        losses.combined_image_loss(np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))
    with pytest.raises(ValueError):
        losses.combined_image_loss(np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), ratio=0)


@given(arrays(np.float64, (4, 5, 3), elements=st.floats(-10, 10)),
       arrays(np.float64, (4, 5, 3), elements=st.floats(-10, 10)))
def test_image_losses_symmetric_nonnegative(a, b):
    assert losses.mae(a, b) == losses.mae(b, a) >= 0
    assert losses.gmae(a, b) == pytest.approx(losses.gmae(b, a))
    assert losses.gmae(a, a) == 0


# --- smoothness -----------------------------------------------------------


def test_smoothness_zero_for_constant_field():
    f = DeformationField(np.full((3, 8, 6), 2.0), np.full((3, 8, 6), -1.0))
    assert losses.deformation_smoothness(f) == 0.0


def test_smoothness_linear_ramp_closed_form():
    n, h, w, c = 2, 10, 7, 0.3
    dy = np.broadcast_to(c * np.arange(h)[None, :, None], (n, h, w)).copy()
    f = DeformationField(dy, np.zeros_like(dy))
    # interior rows: 2c * 4 ; the clamped first/last rows: c * 4
    expected = n * w * ((h - 2) * (8 * c) ** 2 + 2 * (4 * c) ** 2)
    assert losses.deformation_smoothness(f, scale=1.0) == pytest.approx(expected, rel=1e-12)
    assert losses.deformation_smoothness(f) == pytest.approx(5e-8 * expected, rel=1e-12)


def test_smoothness_matches_bruteforce(rng):
    dy, dx = rng.normal(size=(3, 9, 8)), rng.normal(size=(3, 9, 8))
    total = 0.0
    for comp in (dy, dx):
        for k in range(comp.shape[0]):
            for ax in (0, 1):
                total += np.sum(_sobel_bruteforce(comp[k], ax) ** 2)
    got = losses.deformation_smoothness(DeformationField(dy, dx), scale=1.0)
    assert got == pytest.approx(total, rel=1e-12)


@given(st.floats(-1.65, 1.65), st.floats(-3, 3))
def test_smoothness_quadratic_homogeneity(s, k):
    f = deformation_field([s, 0.5 * s], (24, 16))
    base = losses.deformation_smoothness(f)
    assert losses.deformation_smoothness(f * k) == pytest.approx(k * k * base, rel=1e-9, abs=1e-300)


def test_smoothness_batch_is_averaged():
    f1 = deformation_field([1.0], (16, 16))
    f2 = deformation_field([0.5], (16, 16))
    both = losses.deformation_smoothness([f1, f2])
    assert both == pytest.approx(0.5 * (losses.deformation_smoothness(f1)
                                        + losses.deformation_smoothness(f2)))


# --- focal Tversky --------------------------------------------------------


def _random_masks(rng, shape=(6, 5, 5, 5)):
    return (rng.random(shape) > 0.6).astype(np.float64)


def test_focal_tversky_perfect_prediction_is_zero(rng):
    g = _random_masks(rng)
    assert losses.focal_tversky(g, g) == pytest.approx(0.0, abs=1e-12)


def test_focal_tversky_reduces_to_soft_dice(rng):
    g = _random_masks(rng)
    p = rng.random(g.shape)
    axes = (1, 2, 3)
    soft_dice = 2 * np.sum(p * g, axis=axes) / (np.sum(p, axis=axes) + np.sum(g, axis=axes))
    got = losses.focal_tversky(p, g, alpha=0.5, beta=0.5, gamma=1.0)
    assert got == pytest.approx(np.sum(1 - soft_dice), rel=1e-12)


def test_focal_tversky_disjoint_is_one_per_class():
    g = np.zeros((6, 4, 4, 4))
    p = np.zeros_like(g)
    g[:, :2] = 1
    p[:, 2:] = 1
    assert losses.focal_tversky(p, g) == pytest.approx(6.0)


def test_focal_tversky_penalizes_misses_more_than_extras():
    g = np.zeros((1, 10, 10, 10))
    g[0, 2:8, 2:8, 2:8] = 1
    missed = g.copy()
    missed[0, 2, 2:8, 2:8] = 0  # 36 false negatives
    extra = g.copy()
    extra[0, 8, 2:8, 2:8] = 1  # 36 false positives
    assert losses.focal_tversky(missed, g) > losses.focal_tversky(extra, g)


def test_focal_tversky_absent_class_costs_nothing():
    z = np.zeros((2, 3, 3, 3))
    assert losses.focal_tversky(z, z) == 0.0


def test_focal_tversky_rejects_out_of_range(rng):
    with pytest.raises(ValueError):
        losses.focal_tversky(np.full((1, 2, 2, 2), 1.5), np.ones((1, 2, 2, 2)))


# --- surface area ---------------------------------------------------------


def _surface_bruteforce(mask):
    """Foreground voxels with any in-grid background neighbour (26-neighbourhood)."""
    count = 0
    shape = mask.shape
    for idx in zip(*np.nonzero(mask)):
        for off in itertools.product((-1, 0, 1), repeat=3):
            nb = tuple(i + o for i, o in zip(idx, off))
            if all(0 <= v < n for v, n in zip(nb, shape)) and not mask[nb]:
                count += 1
                break
    return count


def test_surface_examples():
    m = np.zeros((5, 5, 5), dtype=bool)
    m[2, 2, 2] = True
    assert losses.surface_count(m) == 1
    assert losses.surface_area_loss(m, np.zeros_like(m)) == pytest.approx(7.62e-6)
    cube = np.zeros((7, 7, 7), dtype=bool)
    cube[2:5, 2:5, 2:5] = True
    assert losses.surface_count(cube) == 26
    assert losses.surface_count(np.ones((4, 4, 4), dtype=bool)) == 0


@given(arrays(np.bool_, (5, 6, 4)))
def test_surface_matches_bruteforce(m):
    assert losses.surface_count(m) == _surface_bruteforce(m)


def test_surface_loss_sums_squared_class_differences():
    p = np.zeros((2, 6, 6, 6), dtype=bool)
    g = np.zeros_like(p)
    p[0, 1:4, 1:4, 1:4] = True  # 26
    g[0, 2, 2, 2] = True  # 1
    p[1, 3, 3, 3] = True  # 1
    assert losses.surface_area_loss(p, g, scale=1.0) == 25 ** 2 + 1


def test_surface_rejects_non_binary():
    with pytest.raises(ValueError, match="non-binary"):
        losses.surface_area_loss(np.full((2, 2, 2), 0.5), np.zeros((2, 2, 2)))


# --- dice -----------------------------------------------------------------


def test_dice_cases():
    a = np.zeros((4, 4, 4), dtype=bool)
    b = np.zeros_like(a)
    assert losses.dice(a, b) == 1.0
    a[:2] = True
    assert losses.dice(a, a) == 1.0
    b[2:] = True
    assert losses.dice(a, b) == 0.0
    b[:] = False
    b[1:3] = True
    assert losses.dice(a, b) == pytest.approx(0.5)


def test_loss_report_identity():
    lab = np.zeros((8, 8, 8), dtype=np.uint8)
    lab[2:6, 2:6, 2:6] = 1
    img = lab.astype(np.float64)
    rep = losses.loss_report(img, img, pred_labels=lab, gt_labels=lab)
    assert rep.mae == rep.gmae == rep.combined == 0
    assert rep.focal_tversky == pytest.approx(0.0, abs=1e-12)
    assert rep.surface_area == 0 and rep.dice == 1.0
