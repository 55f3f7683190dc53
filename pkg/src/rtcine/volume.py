"""Volume containers and geometric / intensity conditioning.

Axis order everywhere is (Head-Foot, Anterior-Posterior, Left-Right), with an
optional leading time axis. Sagittal slices are indexed by the last axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

BG, LV, RV, LA, RA, AO, PA = range(7)
LABEL_NAMES = ("BG", "LV", "RV", "LA", "RA", "Ao", "PA")
STRUCTURES = LABEL_NAMES[1:]


def label_id(name):
    """Map a structure name (case-insensitive) to its label value."""
    lookup = {n.lower(): i for i, n in enumerate(LABEL_NAMES)}
    try:
        return lookup[str(name).lower()]
    except KeyError:
        raise ValueError(f"unknown structure {name!r}; expected one of {LABEL_NAMES}") from None


def _check_geometry(shape, spacing):
    if len(shape) not in (3, 4):
        raise ValueError(f"expected a 3D or 4D array, got shape {shape}")
    if any(n < 1 for n in shape):
        raise ValueError(f"all dims must be >= 1, got {shape}")
    if len(spacing) != 3 or any(not s > 0 for s in spacing):
        raise ValueError(f"spacing must be three positive values, got {spacing}")


@dataclass(frozen=True)
class Volume:
    """Scalar voxel grid with physical spacing in mm.

    ``data`` has shape ``(hf, ap, lr)`` or ``(frames, hf, ap, lr)``.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.5, 1.5, 1.5)
    frame_period: float | None = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float32)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        _check_geometry(data.shape, self.spacing)

    @property
    def dims(self):
        return self.data.shape[-3:]

    @property
    def frames(self):
        return self.data.shape[0] if self.data.ndim == 4 else None

    def with_data(self, data, spacing=None):
        return replace(self, data=data, spacing=self.spacing if spacing is None else spacing)

    def frame(self, index):
        if self.frames is None:
            if index != 0:
                raise IndexError("static volume has only frame 0")
            return self
        return Volume(self.data[index], self.spacing)


@dataclass(frozen=True)
class LabelVolume:
    """Per-voxel class labels in ``{BG, LV, RV, LA, RA, Ao, PA}``."""

    labels: np.ndarray
    spacing: tuple[float, float, float] = (1.5, 1.5, 1.5)
    frame_period: float | None = None
    label_names: tuple[str, ...] = field(default=LABEL_NAMES)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.dtype != np.uint8:
            if labels.size and (labels.min() < 0 or labels.max() > 255):
                raise ValueError("labels must fit in uint8")
            labels = labels.astype(np.uint8)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "label_names", tuple(self.label_names))
        _check_geometry(labels.shape, self.spacing)

    @property
    def dims(self):
        return self.labels.shape[-3:]

    @property
    def frames(self):
        return self.labels.shape[0] if self.labels.ndim == 4 else None

    def with_labels(self, labels):
        return replace(self, labels=labels)

    def frame(self, index):
        if self.frames is None:
            if index != 0:
                raise IndexError("static volume has only frame 0")
            return self
        return LabelVolume(self.labels[index], self.spacing, label_names=self.label_names)

    def mask(self, structure):
        """Boolean mask of one structure (name or label value)."""
        value = structure if isinstance(structure, (int, np.integer)) else label_id(structure)
        return self.labels == value


# ---------------------------------------------------------------------------
# separable interpolation


def keys_cubic(x, a=-0.5):
    """Keys cubic convolution kernel (the usual "bicubic" kernel)."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    out = np.zeros_like(x)
    near = x <= 1
    far = (x > 1) & (x < 2)
    xn, xf = x[near], x[far]
    out[near] = (a + 2) * xn**3 - (a + 3) * xn**2 + 1
    out[far] = a * xf**3 - 5 * a * xf**2 + 8 * a * xf - 4 * a
    return out


def _linear(x):
    return np.clip(1.0 - np.abs(np.asarray(x, dtype=np.float64)), 0.0, None)


_KERNELS = {"cubic": (keys_cubic, 2), "linear": (_linear, 1)}


def interpolation_matrix(n_in, n_out, step, kernel="cubic"):
    """Dense (n_out, n_in) matrix resampling a 1-D signal.

    Output sample ``k`` sits at input coordinate ``(k + 0.5) * step - 0.5``
    (voxel centres aligned on the physical extent). Taps that fall outside
    the signal are filled by odd reflection about the end samples, so linear
    ramps are reproduced exactly up to the edge.
    """
    func, support = _KERNELS[kernel]
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    if n_in == 1:
        mat[:, 0] = 1.0
        return mat
    coords = (np.arange(n_out) + 0.5) * step - 0.5
    last = n_in - 1
    for k, x in enumerate(coords):
        base = math.floor(x)
        for idx in range(base - support + 1, base + support + 1):
            w = float(func(x - idx))
            if w == 0.0:
                continue
            if 0 <= idx <= last:
                mat[k, idx] += w
                continue
            # f(idx) = 2 f(edge) - f(mirror)
            edge = 0 if idx < 0 else last
            mirror = min(max(2 * edge - idx, 0), last)
            mat[k, edge] += 2 * w
            mat[k, mirror] -= w
    return mat


def _apply_along(data, mat, axis):
    moved = np.moveaxis(data, axis, -1)
    out = moved @ mat.T
    return np.moveaxis(out, -1, axis)


def resample_isotropic(v, target_spacing_mm=1.5):
    """Resample to ``target_spacing_mm`` in all three axes with a separable bicubic kernel."""
    t = float(target_spacing_mm)
    if not t > 0:
        raise ValueError("target spacing must be > 0")
    if all(s == t for s in v.spacing):
        return v
    data = v.data.astype(np.float64)
    offset = data.ndim - 3
    for ax, (n, s) in enumerate(zip(v.dims, v.spacing)):
        n_out = max(1, int(round(n * s / t)))
        if s == t and n_out == n:
            continue
        data = _apply_along(data, interpolation_matrix(n, n_out, t / s), ax + offset)
    return v.with_data(data.astype(np.float32), spacing=(t, t, t))


def upsample_slice_dir(v, factor=4, method="cubic"):
    """Interpolate along the Left-Right axis by an integer ``factor``."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return v
    s_hf, s_ap, s_lr = v.spacing
    n = v.dims[2]
    if method == "nearest":
        data = np.repeat(v.data, factor, axis=-1)
    elif method in _KERNELS:
        mat = interpolation_matrix(n, n * factor, 1.0 / factor, kernel=method)
        data = _apply_along(v.data.astype(np.float64), mat, -1).astype(np.float32)
    else:
        raise ValueError(f"unknown method {method!r}")
    return v.with_data(data, spacing=(s_hf, s_ap, s_lr / factor))


# ---------------------------------------------------------------------------
# crop / pad


def _crop_pad_array(arr, target, fill=0):
    lead = arr.ndim - 3
    out = arr
    for ax, (n, m) in enumerate(zip(arr.shape[-3:], target)):
        axis = ax + lead
        if m < n:
            start = (n - m) // 2
            out = np.take(out, np.arange(start, start + m), axis=axis)
        elif m > n:
            before = (m - n) // 2
            pads = [(0, 0)] * out.ndim
            pads[axis] = (before, m - n - before)
            out = np.pad(out, pads, constant_values=fill)
    return out


def crop_or_pad(v, target_dims):
    """Centre-crop or zero-pad each axis to ``target_dims``.

    Odd differences put the extra padded voxel on the high-index side
    (and crop the extra voxel from the high side too).
    """
    target = tuple(int(d) for d in target_dims)
    if len(target) != 3 or min(target) < 1:
        raise ValueError(f"target dims must be three values >= 1, got {target_dims}")
    if isinstance(v, LabelVolume):
        return v.with_labels(_crop_pad_array(v.labels, target, fill=BG))
    return v.with_data(_crop_pad_array(v.data, target))


# ---------------------------------------------------------------------------
# intensity conditioning


def normalize01(v):
    """Affine map to [0, 1]; constant input maps to zeros."""
    data = v.data
    if data.size == 0:
        raise ValueError("cannot normalize an empty volume")
    lo = float(data.min())
    hi = float(data.max())
    if hi == lo:
        return v.with_data(np.zeros_like(data, dtype=np.float32))
    out = (data.astype(np.float64) - lo) / (hi - lo)
    return v.with_data(out.astype(np.float32))


def _tile_edges(n, tiles):
    tiles = max(1, min(int(tiles), n))
    return np.linspace(0, n, tiles + 1).round().astype(int)


def _tile_weights(n, edges):
    """Per-pixel (lower tile, upper tile, upper weight) for bilinear blending."""
    centers = (edges[:-1] + edges[1:] - 1) / 2.0
    pos = np.arange(n, dtype=np.float64)
    hi = np.searchsorted(centers, pos, side="right")
    lo = np.clip(hi - 1, 0, len(centers) - 1)
    hi = np.clip(hi, 0, len(centers) - 1)
    span = centers[hi] - centers[lo]
    w = np.where(span > 0, (pos - centers[lo]) / np.where(span > 0, span, 1.0), 0.0)
    return lo, hi, np.clip(w, 0.0, 1.0)


def clahe_2d(image, tile_counts=(8, 8), clip_limit=2.0, nbins=256):
    """CLAHE on a 2D image whose values are already in [0, 1].

    ``clip_limit`` is relative to a flat histogram: a bin is clipped at
    ``clip_limit * tile_pixels / nbins`` counts and the excess spread evenly.
    """
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    h, w = img.shape
    bins = np.minimum((img * nbins).astype(int), nbins - 1)
    ey = _tile_edges(h, tile_counts[0])
    ex = _tile_edges(w, tile_counts[1])
    maps = np.empty((len(ey) - 1, len(ex) - 1, nbins))
    for i in range(len(ey) - 1):
        for j in range(len(ex) - 1):
            tile = bins[ey[i]:ey[i + 1], ex[j]:ex[j + 1]]
            hist = np.bincount(tile.ravel(), minlength=nbins).astype(np.float64)
            npix = tile.size
            limit = max(clip_limit * npix / nbins, 1.0)
            excess = np.clip(hist - limit, 0.0, None).sum()
            hist = np.minimum(hist, limit) + excess / nbins
            maps[i, j] = np.cumsum(hist) / npix
    y0, y1, wy = _tile_weights(h, ey)
    x0, x1, wx = _tile_weights(w, ex)
    wy, wx = wy[:, None], wx[None, :]
    Y0, Y1, X0, X1 = y0[:, None], y1[:, None], x0[None, :], x1[None, :]
    out = ((1 - wy) * (1 - wx) * maps[Y0, X0, bins]
           + (1 - wy) * wx * maps[Y0, X1, bins]
           + wy * (1 - wx) * maps[Y1, X0, bins]
           + wy * wx * maps[Y1, X1, bins])
    return np.clip(out, 0.0, 1.0)


def clahe(v, tile_counts=(8, 8), clip_limit=2.0, nbins=256):
    """Slice-wise CLAHE over the sagittal (Left-Right) slices.

    The volume is first normalized to [0, 1] as a whole so that every slice
    shares one intensity scale.
    """
    if min(tile_counts) < 1:
        raise ValueError("tile counts must be >= 1")
    if not clip_limit > 0:
        raise ValueError("clip_limit must be > 0")
    norm = normalize01(v).data
    out = np.empty(norm.shape, dtype=np.float32)
    flat_in = norm.reshape((-1,) + norm.shape[-3:])
    flat_out = out.reshape(flat_in.shape)
    for f in range(flat_in.shape[0]):
        for s in range(flat_in.shape[-1]):
            flat_out[f, :, :, s] = clahe_2d(flat_in[f, :, :, s], tile_counts, clip_limit, nbins)
    return v.with_data(out)


# ---------------------------------------------------------------------------
# rotation


def rotation_matrix(angles_deg):
    """Rotation about the HF, AP and LR axes (applied in that order)."""
    a, b, c = np.deg2rad(np.asarray(angles_deg, dtype=np.float64))
    rx = np.array([[1, 0, 0], [0, np.cos(a), -np.sin(a)], [0, np.sin(a), np.cos(a)]])
    ry = np.array([[np.cos(b), 0, np.sin(b)], [0, 1, 0], [-np.sin(b), 0, np.cos(b)]])
    rz = np.array([[np.cos(c), -np.sin(c), 0], [np.sin(c), np.cos(c), 0], [0, 0, 1]])
    return rz @ ry @ rx


def _rotate_array(arr, rot, spacing, order, fill):
    # rotate in physical space, resample on the voxel grid
    scale = np.diag(spacing)
    inv = np.linalg.inv(scale) @ rot.T @ scale
    center = (np.asarray(arr.shape[-3:], dtype=np.float64) - 1) / 2.0
    offset = center - inv @ center
    kw = dict(order=order, mode="constant", cval=fill, prefilter=order > 1)
    if arr.ndim == 3:
        return ndimage.affine_transform(arr, inv, offset=offset, **kw)
    return np.stack([ndimage.affine_transform(a, inv, offset=offset, **kw) for a in arr])


def rotate_augment(v, m=None, angles_deg=(0.0, 0.0, 0.0)):
    """Rotate image (cubic) and optional labels (nearest) about the grid centre."""
    angles = tuple(float(a) for a in angles_deg)
    if all(a == 0.0 for a in angles):
        return v, m
    rot = rotation_matrix(angles)
    img = _rotate_array(v.data.astype(np.float64), rot, v.spacing, 3, 0.0)
    out_v = v.with_data(img.astype(np.float32))
    out_m = None
    if m is not None:
        out_m = m.with_labels(_rotate_array(m.labels, rot, m.spacing, 0, BG).astype(np.uint8))
    return out_v, out_m


def random_angles(rng, max_deg=10.0):
    """Three independent angles uniform in ``[-max_deg, max_deg]``."""
    return tuple(float(a) for a in rng.uniform(-max_deg, max_deg, size=3))
