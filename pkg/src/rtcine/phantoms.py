"""Synthetic phantoms with known geometry."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .volume import AO, BG, LA, LV, PA, RA, RV, LabelVolume, Volume


def cylinder_mask(dims, radius, center=None, axis=0, extent=None):
    """Digital cylinder: voxels whose centre lies within ``radius`` of the axis."""
    dims = tuple(dims)
    grid = np.indices(dims, dtype=np.float64)
    others = [a for a in range(3) if a != axis]
    if center is None:
        center = [(dims[a] - 1) / 2 for a in others]
    r2 = sum((grid[a] - c) ** 2 for a, c in zip(others, center))
    mask = r2 <= radius ** 2
    if extent is not None:
        lo, hi = extent
        mask &= (grid[axis] >= lo) & (grid[axis] < hi)
    return mask


def sphere_mask(dims, radius, center=None):
    dims = tuple(dims)
    if center is None:
        center = [(d - 1) / 2 for d in dims]
    grid = np.indices(dims, dtype=np.float64)
    return sum((g - c) ** 2 for g, c in zip(grid, center)) <= radius ** 2


def ellipsoid_mask(dims, radii, center):
    grid = np.indices(tuple(dims), dtype=np.float64)
    return sum(((g - c) / r) ** 2 for g, c, r in zip(grid, center, radii)) <= 1.0


def smooth_phantom(dims, seed=0, sigma=4.0):
    """Smooth random field in [0, 1]; handy for interpolation round trips."""
    g = np.random.default_rng(seed)
    field = ndimage.gaussian_filter(g.standard_normal(dims), sigma, mode="wrap")
    field -= field.min()
    return field / field.max()


def heart_labels(dims=(96, 64, 64), phase=0.0):
    """Four chambers plus straight Ao and PA tubes.

    ``phase`` in [0, 1] shrinks the ventricles (0 = end-diastole,
    1 = end-systole) so a cine of phantoms has a realistic volume curve.
    """
    n_hf, n_ap, n_lr = dims
    sy, sx, sz = n_hf / 96, n_ap / 64, n_lr / 64
    lab = np.zeros(dims, dtype=np.uint8)
    squeeze = 1.0 - 0.25 * phase

    def put(mask, value):
        lab[mask & (lab == BG)] = value

    put(ellipsoid_mask(dims, (7 * sy, 7 * sx, 7 * sz), (28 * sy, 30 * sx, 42 * sz)), LA)
    put(ellipsoid_mask(dims, (7 * sy, 7 * sx, 7 * sz), (28 * sy, 30 * sx, 21 * sz)), RA)
    put(ellipsoid_mask(dims, (14 * sy * squeeze, 9 * sx * squeeze, 9 * sz * squeeze),
                       (54 * sy, 30 * sx, 42 * sz)), LV)
    put(ellipsoid_mask(dims, (14 * sy * squeeze, 9 * sx * squeeze, 7 * sz * squeeze),
                       (54 * sy, 30 * sx, 22 * sz)), RV)
    put(cylinder_mask(dims, 4 * sx, center=(52 * sx, 40 * sz), extent=(8 * sy, 40 * sy)), AO)
    put(cylinder_mask(dims, 4 * sx, center=(52 * sx, 18 * sz), extent=(8 * sy, 40 * sy)), PA)
    return lab


def heart_image(labels, seed=0, blood=1.0, myo=0.3, background=0.12):
    """Bright blood pools, darker myocardial shell round the ventricles, textured background."""
    lab = np.asarray(labels)
    img = np.full(lab.shape, background, dtype=np.float64)
    ventricles = (lab == LV) | (lab == RV)
    shell = ndimage.binary_dilation(ventricles, iterations=3) & (lab == BG)
    img += 0.05 * smooth_phantom(lab.shape, seed)
    img[shell] = myo
    img[lab != BG] = blood
    return img.astype(np.float32)


def heart_phantom(dims=(96, 64, 64), frames=None, spacing=(1.5, 1.5, 1.5), seed=0):
    """(Volume, LabelVolume) pair; a cine when ``frames`` is given."""
    if frames is None:
        lab = heart_labels(dims)
        return Volume(heart_image(lab, seed), spacing), LabelVolume(lab, spacing)
    phases = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(frames) / frames)
    labs = np.stack([heart_labels(dims, p) for p in phases])
    imgs = np.stack([heart_image(lab, seed) for lab in labs])
    period = 1.0 / frames
    return Volume(imgs, spacing, period), LabelVolume(labs, spacing, period)
