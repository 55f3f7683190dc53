"""Framework-free reference implementations of the training losses.

All functions take plain arrays (or :class:`~rtcine.volume.Volume` objects)
and return Python floats. Multi-class inputs are channel-first:
``(n_classes, *spatial)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

GMAE_RATIO = 5.357
SMOOTHNESS_SCALE = 5e-8
SURFACE_SCALE = 7.62e-6
N_CLASSES = 6


def _arr(x):
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def _pair(a, b):
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def mae(a, b):
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))


def sobel_gradients(x):
    """Sobel derivative along every axis, edge-replicated."""
    x = np.asarray(x, dtype=np.float64)
    return [ndimage.sobel(x, axis=ax, mode="nearest") for ax in range(x.ndim)]


def gmae(a, b):
    """Mean absolute difference of Sobel gradients, averaged over axes."""
    a, b = _pair(a, b)
    ga, gb = sobel_gradients(a), sobel_gradients(b)
    return float(np.mean([np.mean(np.abs(x - y)) for x, y in zip(ga, gb)]))


def combined_image_loss(a, b, ratio=GMAE_RATIO):
    """``mae + ratio * gmae``; the default ratio is the tuned GMAE:MAE weight."""
    if not ratio > 0:
        raise ValueError("ratio must be > 0")
    return mae(a, b) + ratio * gmae(a, b)


def deformation_smoothness(f, scale=SMOOTHNESS_SCALE):
    """Squared-gradient penalty on in-plane displacement fields.

    ``f`` is a :class:`~rtcine.resp.DeformationField` or a sequence of them
    (a batch). For each field the 2D Sobel gradients of the dy and dx maps
    are taken slice by slice; their squares are summed over components,
    pixels and slices. The per-field sums are averaged over the batch and
    multiplied by ``scale``.
    """
    fields = f if isinstance(f, (list, tuple)) else [f]
    totals = []
    for fld in fields:
        total = 0.0
        for comp in (fld.dy, fld.dx):
            comp = np.asarray(comp, dtype=np.float64)
            for k in range(comp.shape[0]):  # 2D per slice; no smoothing across slices
                for g in sobel_gradients(comp[k]):
                    total += float(np.sum(g * g))
        totals.append(total)
    return scale * float(np.mean(totals))


def tversky_index(pred, gt, alpha=0.7, beta=0.3):
    """Soft Tversky index per class; 1 when a class is absent from both."""
    pred, gt = _pair(pred, gt)
    axes = tuple(range(1, pred.ndim))
    tp = np.sum(pred * gt, axis=axes)
    fn = np.sum((1 - pred) * gt, axis=axes)
    fp = np.sum(pred * (1 - gt), axis=axes)
    denom = tp + alpha * fn + beta * fp
    return np.where(denom > 0, tp / np.where(denom > 0, denom, 1.0), 1.0)


def focal_tversky(pred, gt, alpha=0.7, beta=0.3, gamma=0.75):
    """Sum over classes of ``(1 - TI) ** gamma``.

    ``alpha`` weights false negatives, ``beta`` false positives.
    """
    pred = _arr(pred)
    if pred.min(initial=0.0) < 0 or pred.max(initial=0.0) > 1:
        raise ValueError("pred must lie in [0, 1]")
    ti = tversky_index(pred, gt, alpha, beta)
    return float(np.sum(np.clip(1.0 - ti, 0.0, None) ** gamma))


def _as_binary(mask):
    m = np.asarray(getattr(mask, "data", mask))
    if m.dtype != bool:
        if not np.isin(m, (0, 1)).all():
            raise ValueError("non-binary input")
        m = m.astype(bool)
    return m


def erode(mask):
    """Keep voxels whose whole in-grid 3x3x3 neighbourhood is foreground.

    Neighbours beyond the grid are ignored, as with a same-padded max-pool
    on the inverted mask.
    """
    return ndimage.minimum_filter(mask.astype(np.uint8), size=3, mode="nearest").astype(bool)


def surface_count(mask):
    """Number of foreground voxels removed by :func:`erode`."""
    m = _as_binary(mask)
    return int(np.count_nonzero(m & ~erode(m)))


def surface_area_loss(pred, gt, scale=SURFACE_SCALE):
    """Scaled sum over classes of squared surface-voxel-count differences.

    ``pred`` and ``gt`` are binary, channel-first. A single 3D mask is
    treated as one class.
    """
    p, g = _as_binary(pred), _as_binary(gt)
    if p.shape != g.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {g.shape}")
    if p.ndim == 3:
        p, g = p[None], g[None]
    total = sum((surface_count(pc) - surface_count(gc)) ** 2 for pc, gc in zip(p, g))
    return scale * float(total)


def dice(pred, gt):
    p, g = _as_binary(pred), _as_binary(gt)
    if p.shape != g.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {g.shape}")
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(p & g)) / denom


def one_hot(labels, n_classes=N_CLASSES):
    """Channel-first binary masks for labels ``1..n_classes`` (background dropped)."""
    lab = np.asarray(getattr(labels, "labels", labels))
    return np.stack([lab == c for c in range(1, n_classes + 1)])


@dataclass(frozen=True)
class LossReport:
    mae: float
    gmae: float
    combined: float
    smoothness: float
    focal_tversky: float
    surface_area: float
    dice: float


def loss_report(image_a, image_b, field=None, pred_labels=None, gt_labels=None):
    """Evaluate every loss that the given inputs allow; others are 0 (dice 1).

    ``dice`` is the mean of the per-class Dice scores.
    """
    smooth = deformation_smoothness(field) if field is not None else 0.0
    ftl = surf = 0.0
    d = 1.0
    if pred_labels is not None and gt_labels is not None:
        p, g = one_hot(pred_labels), one_hot(gt_labels)
        ftl = focal_tversky(p.astype(np.float64), g.astype(np.float64))
        surf = surface_area_loss(p, g)
        d = float(np.mean([dice(pc, gc) for pc, gc in zip(p, g)]))
    m, gm = mae(image_a, image_b), gmae(image_a, image_b)
    return LossReport(m, gm, m + GMAE_RATIO * gm, smooth, ftl, surf, d)
