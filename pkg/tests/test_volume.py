import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import gaussian_blob
from rtcine.volume import (
    LV,
    LabelVolume,
    Volume,
    clahe,
    crop_or_pad,
    interpolation_matrix,
    keys_cubic,
    normalize01,
    resample_isotropic,
    rotate_augment,
    upsample_slice_dir,
)


def test_volume_rejects_bad_geometry():
    with pytest.raises(ValueError):
        Volume(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        Volume(np.zeros((2, 2, 2)), spacing=(1, 0, 1))
    with pytest.raises(ValueError):
        Volume(np.zeros((0, 2, 2)))


def test_keys_kernel_interpolates():
    assert keys_cubic(0.0) == 1.0
    np.testing.assert_array_equal(keys_cubic([1.0, 2.0, -1.0, 2.5]), 0.0)
    # partition of unity
    for t in np.linspace(0, 1, 11):
        assert keys_cubic(np.array([t + 1, t, t - 1, t - 2])).sum() == pytest.approx(1.0)


def test_interpolation_matrix_rows_sum_to_one():
    for n_in, n_out, step in [(10, 20, 0.5), (20, 10, 2.0), (7, 13, 7 / 13), (1, 5, 0.2)]:
        mat = interpolation_matrix(n_in, n_out, step)
        np.testing.assert_allclose(mat.sum(axis=1), 1.0, atol=1e-12)


# --- resample_isotropic ---------------------------------------------------


def test_resample_identity_when_spacing_matches(rng):
    v = Volume(rng.random((6, 5, 4)).astype(np.float32), (1.5, 1.5, 1.5))
    out = resample_isotropic(v, 1.5)
    assert out.data.tobytes() == v.data.tobytes()


@pytest.mark.parametrize("target", [0.75, 1.5, 2.0, 3.3])
def test_resample_preserves_constants(target):
    v = Volume(np.full((9, 8, 7), 0.37, dtype=np.float32), (1.0, 2.0, 3.0))
    out = resample_isotropic(v, target)
    assert out.spacing == (target,) * 3
    assert out.dims == tuple(max(1, round(n * s / target)) for n, s in zip((9, 8, 7), (1.0, 2.0, 3.0)))
    np.testing.assert_allclose(out.data, 0.37, atol=1e-6)


def _ramp(pos_hf, pos_ap, pos_lr):
    # linear in each axis separately (includes the xyz cross term)
    return 0.1 + 0.01 * pos_hf + 0.02 * pos_ap + 0.015 * pos_lr + 1e-5 * pos_hf * pos_ap * pos_lr


def test_resample_reproduces_trilinear_ramp():
    s, t = 3.0, 1.5
    dims = (12, 10, 8)
    centers = [(np.arange(n) + 0.5) * s for n in dims]
    v = Volume(_ramp(*np.meshgrid(*centers, indexing="ij")), (s, s, s))
    out = resample_isotropic(v, t)
    assert out.dims == (24, 20, 16)
    out_centers = [(np.arange(n) + 0.5) * t for n in out.dims]
    expected = _ramp(*np.meshgrid(*out_centers, indexing="ij"))
    err = np.abs(out.data - expected)[2:-2, 2:-2, 2:-2]
    assert err.max() < 1e-3


def test_resample_4d_keeps_frames(rng):
    v = Volume(rng.random((3, 4, 4, 4)), (3.0, 3.0, 3.0))
    out = resample_isotropic(v, 1.5)
    assert out.data.shape == (3, 8, 8, 8)


# --- crop_or_pad ----------------------------------------------------------


def test_crop_or_pad_identity(rng):
    v = Volume(rng.random((5, 6, 7)))
    assert np.array_equal(crop_or_pad(v, (5, 6, 7)).data, v.data)


def test_pad_is_symmetric_with_extra_on_high_side():
    v = Volume(np.ones((3, 3, 10)))
    out = crop_or_pad(v, (3, 3, 12)).data
    assert out.shape == (3, 3, 12)
    assert np.all(out[..., 0] == 0) and np.all(out[..., -1] == 0)
    assert np.all(out[..., 1:11] == 1)
    odd = crop_or_pad(v, (3, 3, 13)).data
    assert np.all(odd[..., 0] == 0) and np.all(odd[..., 1:11] == 1) and np.all(odd[..., 11:] == 0)


def test_segmentation_matrix_size():
    v = Volume(np.ones((250, 140, 100), dtype=np.float32))
    out = crop_or_pad(v, (256, 128, 112))
    assert out.dims == (256, 128, 112)
    assert out.spacing == v.spacing


def test_crop_or_pad_labels_use_background():
    m = LabelVolume(np.full((4, 4, 4), LV))
    out = crop_or_pad(m, (6, 6, 6)).labels
    assert out[0, 0, 0] == 0 and out[3, 3, 3] == LV


@given(st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6)),
       st.tuples(st.integers(0, 4), st.integers(0, 4), st.integers(0, 4)),
       st.integers(0, 2**32 - 1))
def test_pad_then_crop_is_identity(dims, grow, seed):
    data = np.random.default_rng(seed).random(dims).astype(np.float32)
    v = Volume(data)
    bigger = tuple(d + g for d, g in zip(dims, grow))
    back = crop_or_pad(crop_or_pad(v, bigger), dims)
    assert np.array_equal(back.data, data)


# --- normalize01 ----------------------------------------------------------


def test_normalize_examples():
    out = normalize01(Volume(np.array([2.0, 4.0, 6.0]).reshape(1, 1, 3))).data.ravel()
    np.testing.assert_array_equal(out, [0.0, 0.5, 1.0])
    unit = np.array([0.0, 0.25, 1.0], dtype=np.float32).reshape(1, 1, 3)
    np.testing.assert_array_equal(normalize01(Volume(unit)).data, unit)
    np.testing.assert_array_equal(normalize01(Volume(np.full((2, 2, 2), 5.0))).data, 0.0)


@given(arrays(np.float32, (3, 4, 5), elements=st.floats(-1e4, 1e4, width=32)))
def test_normalize_range_and_idempotence(data):
    out = normalize01(Volume(data))
    assert out.data.min() >= 0 and out.data.max() <= 1
    if data.max() > data.min():
        assert out.data.min() == 0 and out.data.max() == 1
        again = normalize01(out)
        np.testing.assert_allclose(again.data, out.data, atol=1e-6)


# --- clahe ----------------------------------------------------------------


def test_clahe_constant_image_stays_constant():
    out = clahe(Volume(np.full((32, 32, 3), 0.4))).data
    assert np.ptp(out) == 0


def test_clahe_deterministic_and_in_range(rng):
    v = Volume(rng.random((40, 30, 4)))
    a, b = clahe(v).data, clahe(v).data
    assert a.tobytes() == b.tobytes()
    assert a.min() >= 0 and a.max() <= 1


def test_clahe_bimodal_contrast_does_not_drop():
    img = np.full((64, 64, 2), 0.3)
    img[:, 32:] = 0.7
    pre = img[:, 32:].mean() / img[:, :32].mean()
    out = clahe(Volume(img)).data
    post = out[:, 32:].mean() / out[:, :32].mean()
    assert post >= pre


def test_clahe_preserves_plateau_order_with_noise(rng):
    img = np.full((64, 64, 2), 0.3) + rng.normal(0, 0.02, (64, 64, 2))
    img[:, 32:] += 0.4
    out = clahe(Volume(img)).data
    assert out[8:-8, 36:-4].mean() > out[8:-8, 4:28].mean()


# --- rotate_augment -------------------------------------------------------


def test_rotate_zero_is_identity(rng):
    v = Volume(rng.random((8, 8, 8)))
    m = LabelVolume(rng.integers(0, 7, (8, 8, 8)))
    rv, rm = rotate_augment(v, m, (0, 0, 0))
    assert np.array_equal(rv.data, v.data) and np.array_equal(rm.labels, m.labels)


@pytest.mark.parametrize("angles", [(8, 0, 0), (0, -6, 0), (0, 0, 10)])
def test_rotate_round_trip(angles):
    v = Volume(gaussian_blob((32, 32, 32)))
    fwd, _ = rotate_augment(v, None, angles)
    back, _ = rotate_augment(fwd, None, tuple(-a for a in angles))
    mse = np.mean((back.data - v.data)[2:-2, 2:-2, 2:-2] ** 2)
    assert mse < 1e-3


def test_rotate_labels_nearest_neighbour_count():
    lab = np.zeros((40, 40, 40), dtype=np.uint8)
    lab[10:30, 10:30, 10:30] = LV
    m = LabelVolume(lab)
    _, rm = rotate_augment(Volume(lab.astype(np.float32)), m, (10, 0, 0))
    assert set(np.unique(rm.labels)) <= {0, LV}
    n0, n1 = (lab == LV).sum(), (rm.labels == LV).sum()
    assert abs(n1 - n0) / n0 < 0.05


# --- upsample_slice_dir ---------------------------------------------------


def test_upsample_factor_one_identity(rng):
    v = Volume(rng.random((4, 4, 5)))
    assert upsample_slice_dir(v, 1) is v


def test_upsample_nearest_replicates():
    data = np.arange(20, dtype=np.float32).reshape(1, 1, 20)
    out = upsample_slice_dir(Volume(data, (1.5, 1.5, 6.0)), 4, "nearest")
    assert out.dims == (1, 1, 80)
    assert out.spacing == (1.5, 1.5, 1.5)
    np.testing.assert_array_equal(out.data.reshape(20, 4), np.repeat(np.arange(20), 4).reshape(20, 4))


@pytest.mark.parametrize("method", ["linear", "cubic"])
def test_upsample_reproduces_lr_ramp(method):
    s = 6.0
    centers = (np.arange(20) + 0.5) * s
    data = np.broadcast_to(0.2 + 0.01 * centers, (3, 3, 20)).astype(np.float64)
    out = upsample_slice_dir(Volume(data, (1.5, 1.5, s)), 4, method)
    fine = (np.arange(80) + 0.5) * 1.5
    expected = 0.2 + 0.01 * fine
    # float32 storage limits agreement to ~1e-7 relative
    np.testing.assert_allclose(out.data[1, 1, 4:-4], expected[4:-4], atol=1e-6)
