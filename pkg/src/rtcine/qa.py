"""Image-quality measurements: edge sharpness, contrast, SSIM/PSNR/MSE."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.metrics import structural_similarity

from .volume import LV, RV

SSIM_WINDOW = 7


@dataclass(frozen=True)
class IntensityProfile:
    samples: np.ndarray
    spacing_mm: float
    normalized: bool = False

    def normalize(self):
        s = np.asarray(self.samples, dtype=np.float64)
        lo, hi = s.min(), s.max()
        if hi == lo:
            return IntensityProfile(np.zeros_like(s), self.spacing_mm, True)
        return IntensityProfile((s - lo) / (hi - lo), self.spacing_mm, True)


def intensity_profile(image, labels, pixel_mm=1.0, step=0.5, start_label=LV, end_label=RV):
    """Line profile across the LV-septum boundary of one 2D slice.

    The line runs from the LV blood-pool centroid to the RV centroid, so it
    crosses blood pool, septal myocardium and blood pool again. Samples are
    ``step`` pixels apart and bilinearly interpolated.
    """
    img = np.asarray(image, dtype=np.float64)
    lab = np.asarray(labels)
    if img.ndim != 2 or img.shape != lab.shape:
        raise ValueError("image and labels must be matching 2D slices")
    a_mask, b_mask = lab == start_label, lab == end_label
    if not a_mask.any() or not b_mask.any():
        raise ValueError("LV and RV masks must both be present in the slice")
    a = np.array(ndimage.center_of_mass(a_mask))
    b = np.array(ndimage.center_of_mass(b_mask))
    dist = float(np.linalg.norm(b - a))
    if dist < step:
        raise ValueError("LV and RV centroids coincide")
    n = int(np.floor(dist / step)) + 1
    pts = a + np.outer(np.arange(n) * step, (b - a) / dist)
    samples = ndimage.map_coordinates(img, pts.T, order=1, mode="nearest")
    return IntensityProfile(samples, step * pixel_mm)


def edge_sharpness(p):
    """Largest absolute step between neighbouring samples of the normalized profile.

    Units are per sample; a constant profile has sharpness 0.
    """
    s = np.asarray(getattr(p, "samples", p), dtype=np.float64)
    if s.size < 2:
        raise ValueError("need at least 2 samples")
    prof = p if isinstance(p, IntensityProfile) else IntensityProfile(s, 1.0)
    return float(np.max(np.abs(np.diff(prof.normalize().samples))))


def contrast(p):
    """Blood pool / myocardium ratio: max over min of the raw profile."""
    s = np.asarray(getattr(p, "samples", p), dtype=np.float64)
    lo = float(s.min())
    if lo <= 0:
        raise ValueError("profile minimum must be > 0 for a contrast ratio")
    return float(s.max()) / lo


def mse(a, b):
    a = np.asarray(getattr(a, "data", a), dtype=np.float64)
    b = np.asarray(getattr(b, "data", b), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(a, b, data_range=1.0):
    """Peak SNR in dB; ``inf`` for identical inputs."""
    err = mse(a, b)
    if err == 0:
        return float("inf")
    return float(10.0 * np.log10(data_range ** 2 / err))


def ssim(a, b, data_range=1.0, win_size=SSIM_WINDOW):
    a = np.asarray(getattr(a, "data", a), dtype=np.float64)
    b = np.asarray(getattr(b, "data", b), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    win = min(win_size, min(a.shape))
    win -= (win + 1) % 2
    if win < 3:
        raise ValueError(f"volume too small for SSIM: {a.shape}")
    return float(structural_similarity(a, b, win_size=win, data_range=data_range))


def image_metrics(a, b):
    return {"ssim": ssim(a, b), "psnr": psnr(a, b), "mse": mse(a, b)}
