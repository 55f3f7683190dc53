"""Vessel centrelines and diameters.

A vessel mask is reduced to an ordered voxel chain (:func:`skeletonize`),
smoothed by a least-squares Chebyshev fit over normalized arc length
(:func:`fit_centerline`), and measured with rays cast in the plane normal to
the centreline (:func:`measure_diameter`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy import ndimage, optimize
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from skimage.measure import euler_number

from .volume import label_id

CENTERLINE_ORDER = 7
N_RAYS = 64
REPORT_FRAME = 30

# landmark -> (structure, report row name)
LANDMARKS = {
    "ao-stj": ("Ao", "Ao"),
    "mpa-stj": ("PA", "MPA"),
    "lpa": ("PA", "LPA"),
    "rpa": ("PA", "RPA"),
}
_ALIASES = {"mid-lpa": "lpa", "mid-rpa": "rpa", "ao": "ao-stj", "mpa": "mpa-stj"}


class TopologyError(ValueError):
    """The mask is not a single loop-free tube."""


# ---------------------------------------------------------------------------
# skeleton


def _offsets():
    out = []
    for dz in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if (dz, dy, dx) > (0, 0, 0):
                    out.append((dz, dy, dx))
    return np.array(out)


def _voxel_graph(mask, spacing, node_weight):
    idx = np.argwhere(mask)
    lookup = np.full(mask.shape, -1, dtype=np.int64)
    lookup[tuple(idx.T)] = np.arange(len(idx))
    rows, cols, lens = [], [], []
    shape = np.array(mask.shape)
    for off in _offsets():
        nb = idx + off
        ok = np.all((nb >= 0) & (nb < shape), axis=1)
        src = np.nonzero(ok)[0]
        dst = lookup[tuple(nb[ok].T)]
        keep = dst >= 0
        rows.append(src[keep])
        cols.append(dst[keep])
        lens.append(np.full(keep.sum(), np.linalg.norm(off * spacing)))
    rows, cols, lens = map(np.concatenate, (rows, cols, lens))
    n = len(idx)
    plain = coo_matrix((lens, (rows, cols)), shape=(n, n)).tocsr()
    w = lens * 0.5 * (node_weight[rows] + node_weight[cols])
    weighted = coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    return idx, plain, weighted


def skeletonize(mask, spacing=(1.0, 1.0, 1.0)):
    """Ordered centreline voxels of a single tubular component.

    The two ends are the geodesically most distant voxels of the mask; the
    chain joining them is the shortest path under a cost ``(dt_max / dt) ** 8``
    that grows steeply away from the distance-transform ridge, so it follows
    the medial axis.
    Side branches are pruned implicitly (only the longest path is kept).
    Each end is then trimmed back while the inscribed radius keeps growing,
    which removes the run from a cap rim onto the axis.

    Returns an ``(n, 3)`` integer array of voxel indices.
    """
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise ValueError("empty mask")
    _, n_comp = ndimage.label(m, structure=np.ones((3, 3, 3)))
    if n_comp != 1:
        raise TopologyError(f"mask has {n_comp} disconnected components")
    chi = euler_number(m, connectivity=3)
    if chi < 1:
        raise TopologyError(f"mask contains a loop (Euler characteristic {chi})")
    if chi > 1:
        raise TopologyError(f"mask encloses a cavity (Euler characteristic {chi})")
    if m.sum() == 1:
        return np.argwhere(m)

    spacing = np.asarray(spacing, dtype=np.float64)
    dt = ndimage.distance_transform_edt(np.pad(m, 1), sampling=spacing)[1:-1, 1:-1, 1:-1]
    dt_nodes = dt[m]
    # steep enough that a one-voxel step off the ridge of a thin tube costs more than it saves
    penalty = (dt_nodes.max() / dt_nodes) ** 8
    idx, plain, weighted = _voxel_graph(m, spacing, penalty)

    d0 = dijkstra(plain, directed=False, indices=0)
    a = int(np.argmax(d0))
    da = dijkstra(plain, directed=False, indices=a)
    b = int(np.argmax(da))
    _, pred = dijkstra(weighted, directed=False, indices=a, return_predecessors=True)
    path = [b]
    while path[-1] != a:
        path.append(int(pred[path[-1]]))
    path = path[::-1]

    radius = dt_nodes[path]
    lo, hi = 0, len(path) - 1
    while lo < hi and radius[lo + 1] > radius[lo]:
        lo += 1
    while hi > lo and radius[hi - 1] > radius[hi]:
        hi -= 1
    return idx[path[lo:hi + 1]]


# ---------------------------------------------------------------------------
# centreline fit


@dataclass(frozen=True)
class Centerline:
    """Chebyshev centreline ``x(s)`` for ``s`` in [0, 1].

    ``cheb_coeffs`` has shape ``(3, order + 1)``; the basis argument is
    ``2 s - 1``.
    """

    points_mm: np.ndarray
    arc_s: np.ndarray
    cheb_coeffs: np.ndarray
    residual_rms: float

    @property
    def order(self):
        return self.cheb_coeffs.shape[1] - 1

    def __call__(self, s):
        x = 2.0 * np.asarray(s, dtype=np.float64) - 1.0
        return np.stack([C.chebval(x, c) for c in self.cheb_coeffs], axis=-1)

    def derivative(self, s):
        x = 2.0 * np.asarray(s, dtype=np.float64) - 1.0
        return np.stack([2.0 * C.chebval(x, C.chebder(c)) for c in self.cheb_coeffs], axis=-1)


def arc_parameter(points):
    """Cumulative chord length normalized to [0, 1]."""
    p = np.asarray(points, dtype=np.float64)
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    if np.any(seg == 0):
        raise ValueError("repeated consecutive points")
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return s / s[-1]


def fit_centerline(points_mm, order=CENTERLINE_ORDER, params=None):
    """Least-squares Chebyshev fit of each coordinate.

    ``params`` overrides the default arc-length parameter (values in [0, 1],
    strictly increasing).
    """
    p = np.asarray(points_mm, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError("points must have shape (n, 3)")
    if len(p) < order + 1:
        raise ValueError(f"underdetermined fit: {len(p)} points for order {order}")
    s = arc_parameter(p) if params is None else np.asarray(params, dtype=np.float64)
    if s.shape != (len(p),) or np.any(np.diff(s) <= 0) or s[0] < 0 or s[-1] > 1:
        raise ValueError("params must be strictly increasing within [0, 1]")
    vander = C.chebvander(2.0 * s - 1.0, order)
    coeffs, *_ = np.linalg.lstsq(vander, p, rcond=None)
    resid = p - vander @ coeffs
    rms = float(np.sqrt(np.mean(np.sum(resid ** 2, axis=1))))
    return Centerline(p, s, coeffs.T.copy(), rms)


def centerline_from_mask(mask, spacing, order=CENTERLINE_ORDER):
    chain = skeletonize(mask, spacing)
    return fit_centerline(chain * np.asarray(spacing, dtype=np.float64), order)


def select_point(c, arc_fraction=None, nearest_to=None):
    """Point, unit tangent and parameter at an arc fraction or nearest a point."""
    if (arc_fraction is None) == (nearest_to is None):
        raise ValueError("give exactly one of arc_fraction / nearest_to")
    if arc_fraction is not None:
        s = float(arc_fraction)
        if not 0.0 <= s <= 1.0:
            raise ValueError("arc_fraction must be in [0, 1]")
    else:
        target = np.asarray(nearest_to, dtype=np.float64)
        grid = np.linspace(0.0, 1.0, 2001)
        k = int(np.argmin(np.linalg.norm(c(grid) - target, axis=1)))
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
        res = optimize.minimize_scalar(lambda t: float(np.sum((c(t) - target) ** 2)),
                                       bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-10})
        s = float(res.x) if res.fun <= np.sum((c(grid[k]) - target) ** 2) else float(grid[k])
    d = c.derivative(s)
    norm = float(np.linalg.norm(d))
    if norm < 1e-9:
        raise ValueError("degenerate tangent")
    return c(s), d / norm, s


# ---------------------------------------------------------------------------
# diameter


@dataclass(frozen=True)
class DiameterMeasurement:
    landmark: str
    point_mm: np.ndarray
    tangent: np.ndarray
    radii_mm: np.ndarray
    diameter_mm: float

    @property
    def ray_min_mm(self):
        return float(self.radii_mm.min())

    @property
    def ray_max_mm(self):
        return float(self.radii_mm.max())


def ray_basis(tangent):
    """Orthonormal in-plane basis: first vector is the HF axis projected
    onto the normal plane (AP axis if HF is parallel to the tangent)."""
    t = np.asarray(tangent, dtype=np.float64)
    t = t / np.linalg.norm(t)
    for axis in (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])):
        e1 = axis - np.dot(axis, t) * t
        if np.linalg.norm(e1) > 1e-6:
            break
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(t, e1)


def measure_diameter(mask, spacing, point_mm, tangent, n_rays=N_RAYS, step_vox=0.1, landmark=""):
    """Twice the mean boundary distance over ``n_rays`` evenly spaced rays.

    The boundary is the first crossing of 0.5 by the trilinearly
    interpolated mask, located to sub-step precision by linear interpolation.
    """
    m = np.asarray(mask, dtype=np.float64)
    spacing = np.asarray(spacing, dtype=np.float64)
    point = np.asarray(point_mm, dtype=np.float64)
    if ndimage.map_coordinates(m, (point / spacing)[:, None], order=1)[0] < 0.5:
        raise ValueError("point outside mask")
    t = np.asarray(tangent, dtype=np.float64)
    t = t / np.linalg.norm(t)
    e1, e2 = ray_basis(t)
    theta = 2 * np.pi * np.arange(n_rays) / n_rays
    dirs = np.cos(theta)[:, None] * e1 + np.sin(theta)[:, None] * e2

    step = step_vox * spacing.min()
    r_max = float(np.linalg.norm(np.asarray(m.shape) * spacing))
    radii = np.arange(0.0, r_max + step, step)
    pos = (point + radii[None, :, None] * dirs[:, None, :]) / spacing  # (rays, steps, 3)
    inside_grid = np.all((pos >= 0) & (pos <= np.asarray(m.shape) - 1), axis=2)
    vals = ndimage.map_coordinates(m, pos.reshape(-1, 3).T, order=1, mode="constant", cval=0.0)
    vals = vals.reshape(pos.shape[:2])

    out = np.empty(n_rays)
    for k in range(n_rays):
        below = np.nonzero(vals[k] < 0.5)[0]
        leaves = np.nonzero(~inside_grid[k])[0]
        if below.size == 0 or (leaves.size and leaves[0] <= below[0]):
            raise ValueError(f"ray {k} does not exit the mask inside the grid")
        i = below[0]
        v0, v1 = vals[k, i - 1], vals[k, i]
        out[k] = radii[i - 1] + step * (v0 - 0.5) / (v0 - v1)
    return DiameterMeasurement(landmark, point, t, out, float(2.0 * out.mean()))


# ---------------------------------------------------------------------------
# report


def canonical_landmark(name):
    key = _ALIASES.get(name.lower(), name.lower())
    if key not in LANDMARKS:
        raise ValueError(f"unknown landmark {name!r}; expected one of {tuple(LANDMARKS)}")
    return key


def vessel_report(labels4d, landmarks, frame=REPORT_FRAME, order=CENTERLINE_ORDER, n_rays=N_RAYS):
    """Diameters at named landmarks for one (1-based) cine frame.

    ``landmarks`` maps a landmark name (``ao-stj``, ``mpa-stj``, ``lpa``,
    ``rpa``) to an arc fraction along that vessel's centreline or a 3D point
    in mm, which is projected onto the centreline.
    Returns a dict keyed by report row (``Ao``, ``MPA``, ``LPA``, ``RPA``) in
    that order.
    """
    n_frames = labels4d.frames or 1
    if not 1 <= frame <= n_frames:
        raise IndexError(f"frame {frame} out of range 1..{n_frames}")
    lab = labels4d.labels if labels4d.frames is None else labels4d.labels[frame - 1]
    wanted = {canonical_landmark(k): v for k, v in landmarks.items()}
    lines = {}
    out = {}
    for key, (structure, row) in LANDMARKS.items():
        if key not in wanted:
            continue
        mask = lab == label_id(structure)
        if structure not in lines:
            lines[structure] = centerline_from_mask(mask, labels4d.spacing, order)
        where = wanted[key]
        if np.ndim(where) == 0:
            point, tangent, _ = select_point(lines[structure], arc_fraction=float(where))
        else:
            point, tangent, _ = select_point(lines[structure], nearest_to=where)
        out[row] = measure_diameter(mask, labels4d.spacing, point, tangent, n_rays, landmark=key)
    return out
