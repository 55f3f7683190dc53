"""From per-class masks to clean labels and ventricular volumes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import BG, LABEL_NAMES, label_id

BINARIZE_THRESHOLD = 0.2

_FACE = ndimage.generate_binary_structure(3, 1)
_FULL = ndimage.generate_binary_structure(3, 3)


def binarize(prob_mask, threshold=BINARIZE_THRESHOLD):
    """Foreground where the soft mask value is ``>= threshold``."""
    p = np.asarray(prob_mask, dtype=np.float64)
    if p.size and (p.min() < 0 or p.max() > 1):
        raise ValueError("mask values must lie in [0, 1]")
    return p >= threshold


def labels_from_soft(prob_masks, threshold=BINARIZE_THRESHOLD):
    """Combine channel-first soft masks (LV..PA) into one label array.

    Each voxel takes the class with the highest probability among those
    passing the threshold, so classes never overlap.
    """
    p = np.asarray(prob_masks, dtype=np.float64)
    fg = binarize(p, threshold)
    scores = np.where(fg, p, -1.0)
    best = np.argmax(scores, axis=0)
    return np.where(fg.any(axis=0), best + 1, BG).astype(np.uint8)


def _clean_frame(lab, structure):
    classes = [c for c in np.unique(lab) if c != BG]
    comps = {}
    mains = {}
    for c in classes:
        cc, n = ndimage.label(lab == c, structure=structure)
        sizes = np.bincount(cc.ravel(), minlength=n + 1)
        sizes[0] = 0
        main = int(np.argmax(sizes))  # earliest label wins ties
        comps[c] = (cc, n)
        mains[c] = cc == main
    out = np.full_like(lab, BG)
    for c in classes:
        cc, n = comps[c]
        main = mains[c]
        out[main] = c
        if n <= 1:
            continue
        others = np.zeros_like(main)
        for c2 in classes:
            if c2 != c:
                others |= mains[c2]
        # other-class voxels that touch this class's main body by a face
        bridge = ndimage.binary_dilation(main, structure=_FACE) & others
        if not bridge.any():
            continue
        near_bridge = ndimage.binary_dilation(bridge, structure=_FACE)
        touching = np.unique(cc[near_bridge & (cc > 0) & ~main])
        for k in touching:
            out[cc == k] = c
    return out


def clean_islands(labels, connectivity=26):
    """Keep the largest component of every class and drop stray islands.

    An island survives ("combined") only when it is face-adjacent to a voxel
    of another class's main body that is itself face-adjacent to this class's
    main body, i.e. the two pieces are joined through a one-voxel bridge of
    mislabelled tissue. Everything else reverts to background. Frames are
    cleaned independently.
    """
    if connectivity not in (6, 26):
        raise ValueError("connectivity must be 6 or 26")
    structure = _FULL if connectivity == 26 else _FACE
    lab = labels.labels
    if lab.ndim == 3:
        return labels.with_labels(_clean_frame(lab, structure))
    return labels.with_labels(np.stack([_clean_frame(f, structure) for f in lab]))


@dataclass(frozen=True)
class VolumeCurve:
    structure: str
    volumes_ml: np.ndarray
    frame_period: float | None = None


@dataclass(frozen=True)
class VentricularMetrics:
    edv_ml: float
    esv_ml: float
    ef_fraction: float
    edv_frame: int
    esv_frame: int

    def to_dict(self):
        return {"edv_ml": self.edv_ml, "esv_ml": self.esv_ml, "ef": self.ef_fraction,
                "edv_frame": self.edv_frame, "esv_frame": self.esv_frame}


def volume_curve(labels4d, structure):
    """Per-frame structure volume in ml."""
    value = label_id(structure) if isinstance(structure, str) else int(structure)
    if not 0 < value < len(LABEL_NAMES):
        raise ValueError(f"unknown structure {structure!r}")
    lab = labels4d.labels
    if lab.ndim == 3:
        lab = lab[None]
    counts = np.count_nonzero(lab == value, axis=(1, 2, 3))
    voxel_mm3 = float(np.prod(labels4d.spacing))
    return VolumeCurve(LABEL_NAMES[value], counts * voxel_mm3 / 1000.0, labels4d.frame_period)


def ventricular_metrics(curve):
    """EDV = largest volume, ESV = smallest, EF = (EDV - ESV) / EDV."""
    vols = np.asarray(curve.volumes_ml, dtype=np.float64)
    if vols.size == 0 or not np.any(vols > 0):
        raise ValueError("volume curve is all zero")
    ed = int(np.argmax(vols))
    es = int(np.argmin(vols))
    edv, esv = float(vols[ed]), float(vols[es])
    return VentricularMetrics(edv, esv, (edv - esv) / edv, ed, es)


def measure_volumes(labels4d, structures=("LV", "RV")):
    """Volume curves and EDV/ESV/EF for each ventricle that is present."""
    curves = {s: volume_curve(labels4d, s) for s in structures}
    metrics = {s: ventricular_metrics(c) for s, c in curves.items() if np.any(c.volumes_ml > 0)}
    return curves, metrics
