"""Simulated free-breathing multi-slice acquisition.

A HighRes volume is degraded in three steps, each one a separate function:

1. thick slices: non-overlapping groups of Left-Right slices are averaged;
2. respiratory motion: every thick slice is warped in-plane by a parabolic
   displacement field scaled by the breathing signal at its acquisition time;
3. banding: random slices are rescaled in intensity, then the volume is
   renormalized to [0, 1].

:func:`degrade` draws every random quantity up front into a
:class:`DegradeManifest`; :func:`apply_manifest` is the deterministic half,
so replaying a saved manifest reproduces the output bit for bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from . import rng
from .volume import normalize01, rotate_augment

M_RANGE = (0.5, 1.5)
B_RANGE = (3.0, 6.0)
RR_RANGE = (0.6, 1.2)
VAR1_RANGE = (0.9, 1.1)
VAR2_RANGE = (0.95, 1.05)
RR_JITTER_RANGE = (0.95, 1.05)
BAND_PROB = 0.5
BAND_SCALE_RANGE = (0.6, 1.4)
THICK_FACTOR = 4

S_MAX = M_RANGE[1] * VAR1_RANGE[1]
MAX_DY_PX = 20.0
MAX_DX_PX = 8.0
DY_PEAK = MAX_DY_PX / S_MAX
DX_PEAK = MAX_DX_PX / S_MAX

MANIFEST_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RespiratoryConfig:
    """Parameters of the breathing signal and heartbeat timing.

    ``m``, ``b``, ``phi`` and ``rr_mean`` are fixed per volume; the three
    ``*_range`` fields bound the per-cycle / per-beat random scalings.
    Use :meth:`random` for a draw within the admissible ranges.
    """

    m: float = 1.0
    b: float = 4.0
    phi: float = 0.0
    var1_range: tuple[float, float] = VAR1_RANGE
    var2_range: tuple[float, float] = VAR2_RANGE
    rr_mean: float = 1.0
    rr_jitter_range: tuple[float, float] = RR_JITTER_RANGE
    seed: int = 0

    @classmethod
    def random(cls, seed=0, **overrides):
        g = rng.generator(seed, "config")
        params = dict(
            m=float(g.uniform(*M_RANGE)),
            b=float(g.uniform(*B_RANGE)),
            phi=float(g.uniform(0.0, 2 * math.pi)),
            rr_mean=float(g.uniform(*RR_RANGE)),
            seed=int(seed),
        )
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**params)

    def to_dict(self):
        d = asdict(self)
        d["var1_range"] = list(self.var1_range)
        d["var2_range"] = list(self.var2_range)
        d["rr_jitter_range"] = list(self.rr_jitter_range)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("var1_range", "var2_range", "rr_jitter_range"):
            d[key] = tuple(d[key])
        return cls(**d)


# ---------------------------------------------------------------------------
# breathing signal


@dataclass(frozen=True)
class BreathingCycles:
    """Per-cycle amplitude / period scalings and cycle start times."""

    starts: np.ndarray
    periods: np.ndarray
    var1: np.ndarray
    var2: np.ndarray

    @property
    def end(self):
        return float(self.starts[-1] + self.periods[-1])


def breathing_cycles(cfg, t_max):
    """Draw cycles until they cover ``[0, t_max]``.

    The amplitude and period scalings change only at cycle boundaries, i.e.
    after each full period of the (locally scaled) sine.
    """
    # enough cycles even if every period takes its shortest value
    n = int(math.floor(t_max / (cfg.b * min(cfg.var2_range)))) + 2
    var1 = rng.uniforms(cfg.seed, "var1", n, *cfg.var1_range)
    var2 = rng.uniforms(cfg.seed, "var2", n, *cfg.var2_range)
    periods = cfg.b * var2
    ends = np.cumsum(periods)
    k = int(np.searchsorted(ends, t_max, side="right")) + 1  # first cycle ending past t_max
    starts = np.concatenate([[0.0], ends[:k - 1]])
    return BreathingCycles(starts, periods[:k], var1[:k], var2[:k])


def resp_signal(cfg, t, cycles=None):
    """Breathing amplitude ``S(t)``.

    Within cycle ``c`` (starting at ``t_c``) the signal is
    ``m * var1_c * sin(2 pi (t - t_c) / (b * var2_c) + phi)``; with unit
    scalings this is exactly ``m * sin(2 pi t / b + phi)``.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0):
        raise ValueError("t must be >= 0")
    if cycles is None:
        cycles = breathing_cycles(cfg, float(t_arr.max(initial=0.0)))
    if t_arr.size and t_arr.max() > cycles.end:
        raise ValueError("t beyond the drawn breathing cycles")
    idx = np.clip(np.searchsorted(cycles.starts, t_arr, side="right") - 1, 0, len(cycles.starts) - 1)
    local = t_arr - cycles.starts[idx]
    out = cfg.m * cycles.var1[idx] * np.sin(2 * np.pi * local / cycles.periods[idx] + cfg.phi)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# slice timing


@dataclass(frozen=True)
class SliceSchedule:
    """Acquisition time of each slice.

    Slice ``k`` spends beat ``2k`` reaching steady state and is read out
    during beat ``2k + 1``; it is sampled at the midpoint of that beat.
    """

    t_slice: np.ndarray
    beat_index: np.ndarray
    beat_durations: np.ndarray

    @property
    def total_duration(self):
        return float(self.beat_durations.sum())

    @property
    def beat_starts(self):
        return np.concatenate([[0.0], np.cumsum(self.beat_durations)[:-1]])


def build_slice_schedule(cfg, n_slices, jitter=None):
    if n_slices < 1:
        raise ValueError("n_slices must be >= 1")
    n_beats = 2 * n_slices
    if jitter is None:
        jitter = rng.uniforms(cfg.seed, "rr", n_beats, *cfg.rr_jitter_range)
    jitter = np.asarray(jitter, dtype=np.float64)
    if jitter.shape != (n_beats,):
        raise ValueError(f"expected {n_beats} jitter values, got {jitter.shape}")
    durations = cfg.rr_mean * jitter
    starts = np.concatenate([[0.0], np.cumsum(durations)[:-1]])
    beat_index = 2 * np.arange(n_slices) + 1
    t_slice = starts[beat_index] + durations[beat_index] / 2
    return SliceSchedule(t_slice, beat_index, durations)


# ---------------------------------------------------------------------------
# deformation


@dataclass(frozen=True)
class DeformationField:
    """In-plane displacements in pixels, shape ``(n_slices, n_hf, n_ap)``."""

    dy: np.ndarray
    dx: np.ndarray

    def __post_init__(self):
        dy = np.asarray(self.dy, dtype=np.float64)
        dx = np.asarray(self.dx, dtype=np.float64)
        if dy.ndim == 2:
            dy, dx = dy[None], dx[None]
        if dy.shape != dx.shape or dy.ndim != 3:
            raise ValueError(f"dy/dx shapes differ or are not 3D: {dy.shape} vs {dx.shape}")
        object.__setattr__(self, "dy", dy)
        object.__setattr__(self, "dx", dx)

    @property
    def n_slices(self):
        return self.dy.shape[0]

    def __neg__(self):
        return DeformationField(-self.dy, -self.dx)

    def __mul__(self, k):
        return DeformationField(self.dy * k, self.dx * k)

    __rmul__ = __mul__


def parabolic_profile(in_plane_dims):
    """Separable ``4u(1-u) * 4v(1-v)``: 1 at the centre, 0 on every edge."""
    h, w = in_plane_dims
    if h < 2 or w < 2:
        raise ValueError("in-plane dims must be >= 2")
    u = np.arange(h) / (h - 1)
    v = np.arange(w) / (w - 1)
    return np.outer(4 * u * (1 - u), 4 * v * (1 - v))


def deformation_for_slice(s_value, in_plane_dims):
    """``(dy, dx)`` maps for one slice at breathing amplitude ``s_value``.

    Peaks are set so the largest admissible amplitude (1.65) moves the image
    centre by exactly 20 px Head-Foot and 8 px Anterior-Posterior.
    """
    f = parabolic_profile(in_plane_dims)
    return s_value * DY_PEAK * f, s_value * DX_PEAK * f


def deformation_field(s_values, in_plane_dims):
    f = parabolic_profile(in_plane_dims)
    s = np.asarray(s_values, dtype=np.float64)[:, None, None]
    return DeformationField(s * DY_PEAK * f, s * DX_PEAK * f)


def _warp_slice(img, dy, dx):
    h, w = img.shape
    ii, jj = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    return ndimage.map_coordinates(img, [ii - dy, jj - dx], order=1, mode="nearest")


def apply_deformation(v, f):
    """Backward-warp every Left-Right slice by its displacement map.

    Output pixel ``(i, j)`` takes the bilinear sample at ``(i - dy, j - dx)``
    so content moves by ``+d``. Samples beyond the slice are edge-clamped.
    """
    n_hf, n_ap, n_lr = v.dims
    if f.dy.shape != (n_lr, n_hf, n_ap):
        raise ValueError(
            f"dimension mismatch: field {f.dy.shape} for volume slices {(n_lr, n_hf, n_ap)}")
    data = v.data.astype(np.float64)
    out = np.empty_like(data)
    flat_in = data.reshape((-1,) + v.dims)
    flat_out = out.reshape(flat_in.shape)
    for t in range(flat_in.shape[0]):
        for k in range(n_lr):
            flat_out[t, :, :, k] = _warp_slice(flat_in[t, :, :, k], f.dy[k], f.dx[k])
    return v.with_data(out.astype(np.float32))


# ---------------------------------------------------------------------------
# banding / thick slices


def draw_banding(n_slices, p=BAND_PROB, scale_range=BAND_SCALE_RANGE, seed=0):
    """Per-slice ``(selected, factor)``; unselected slices get factor 1."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    selected = np.zeros(n_slices, dtype=bool)
    factors = np.ones(n_slices)
    for k in range(n_slices):
        g = rng.generator(seed, "band", k)
        u, scale = g.uniform(), g.uniform(*scale_range)
        if u < p:
            selected[k] = True
            factors[k] = scale
    return selected, factors


def scale_slices(v, factors, renormalize=True):
    factors = np.asarray(factors, dtype=np.float64)
    if factors.shape != (v.dims[2],):
        raise ValueError(f"need one factor per slice ({v.dims[2]}), got {factors.shape}")
    out = v.with_data((v.data.astype(np.float64) * factors).astype(np.float32))
    return normalize01(out) if renormalize else out


def apply_banding(v, p=BAND_PROB, scale_range=BAND_SCALE_RANGE, seed=0):
    """Randomly rescale slices, then renormalize the volume to [0, 1]."""
    _, factors = draw_banding(v.dims[2], p, scale_range, seed)
    return scale_slices(v, factors), factors


def simulate_thick_slices(v, factor=THICK_FACTOR):
    """Average non-overlapping groups of ``factor`` Left-Right slices.

    A slice count that is not a multiple of ``factor`` is first zero-padded
    (centred) up to the next multiple.
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    n_hf, n_ap, n_lr = v.dims
    data = v.data.astype(np.float64)
    rem = n_lr % factor
    if rem:
        extra = factor - rem
        pads = [(0, 0)] * data.ndim
        pads[-1] = (extra // 2, extra - extra // 2)
        data = np.pad(data, pads)
    groups = data.reshape(data.shape[:-1] + (data.shape[-1] // factor, factor))
    s_hf, s_ap, s_lr = v.spacing
    return v.with_data(groups.mean(axis=-1).astype(np.float32), spacing=(s_hf, s_ap, s_lr * factor))


# ---------------------------------------------------------------------------
# end-to-end


@dataclass
class DegradeManifest:
    """Every random draw behind one degraded volume."""

    config: dict
    factor: int
    band_prob: float
    band_scale_range: tuple[float, float]
    input_dims: tuple[int, int, int]
    cycle_starts: list[float]
    cycle_var1: list[float]
    cycle_var2: list[float]
    rr_jitter: list[float]
    t_slice: list[float]
    s_values: list[float]
    band_selected: list[bool]
    band_factors: list[float]
    angles_deg: list[float] | None = None
    schema_version: int = field(default=MANIFEST_SCHEMA_VERSION)

    def to_json(self):
        d = asdict(self)
        d["band_scale_range"] = list(self.band_scale_range)
        d["input_dims"] = list(self.input_dims)
        return json.dumps(d, indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        version = d.get("schema_version")
        if version != MANIFEST_SCHEMA_VERSION:
            raise ValueError(f"unsupported manifest schema_version {version}")
        d["band_scale_range"] = tuple(d["band_scale_range"])
        d["input_dims"] = tuple(d["input_dims"])
        return cls(**d)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


def draw_manifest(cfg, input_dims, factor=THICK_FACTOR, band_prob=BAND_PROB,
                  band_scale_range=BAND_SCALE_RANGE, angles_deg=None):
    n_lr = input_dims[2]
    n_slices = -(-n_lr // factor)
    sched = build_slice_schedule(cfg, n_slices)
    cycles = breathing_cycles(cfg, sched.total_duration)
    s_values = np.atleast_1d(resp_signal(cfg, sched.t_slice, cycles))
    selected, factors = draw_banding(n_slices, band_prob, band_scale_range, cfg.seed)
    return DegradeManifest(
        config=cfg.to_dict(),
        factor=int(factor),
        band_prob=float(band_prob),
        band_scale_range=tuple(float(x) for x in band_scale_range),
        input_dims=tuple(int(d) for d in input_dims),
        cycle_starts=cycles.starts.tolist(),
        cycle_var1=cycles.var1.tolist(),
        cycle_var2=cycles.var2.tolist(),
        rr_jitter=(sched.beat_durations / cfg.rr_mean).tolist(),
        t_slice=sched.t_slice.tolist(),
        s_values=s_values.tolist(),
        band_selected=selected.tolist(),
        band_factors=factors.tolist(),
        angles_deg=None if angles_deg is None else [float(a) for a in angles_deg],
    )


def apply_manifest(v, manifest):
    """Deterministic degradation driven entirely by recorded draws."""
    if tuple(v.dims) != tuple(manifest.input_dims):
        raise ValueError(f"manifest expects input dims {manifest.input_dims}, got {v.dims}")
    if manifest.angles_deg is not None:
        v, _ = rotate_augment(v, None, manifest.angles_deg)
    low = simulate_thick_slices(v, manifest.factor)
    field_ = deformation_field(manifest.s_values, low.dims[:2])
    low_resp = apply_deformation(low, field_)
    return scale_slices(low_resp, manifest.band_factors)


def degrade(v, cfg, factor=THICK_FACTOR, band_prob=BAND_PROB,
            band_scale_range=BAND_SCALE_RANGE, angles_deg=None):
    """HighRes -> LowRes -> LowRes_resp -> LowRes_resp+band.

    Returns the degraded volume and the manifest needed to replay it.
    """
    manifest = draw_manifest(cfg, v.dims, factor, band_prob, band_scale_range, angles_deg)
    return apply_manifest(v, manifest), manifest


def replay(v, manifest):
    return apply_manifest(v, manifest)


# ---------------------------------------------------------------------------
# elastic augmentation


def elastic_field(dims, magnitude, seed=0, sigma=8.0):
    """Smooth random 3D displacement, shape ``(3, *dims)``, in voxels.

    The largest displacement vector has length ``magnitude * min(n_hf, n_ap)``.
    """
    if not 0.0 <= magnitude <= 0.1:
        raise ValueError("magnitude must be in [0, 0.1]")
    dims = tuple(int(d) for d in dims)
    if magnitude == 0:
        return np.zeros((3,) + dims)
    g = rng.generator(seed, "elastic")
    noise = g.standard_normal((3,) + dims)
    disp = np.stack([ndimage.gaussian_filter(c, sigma, mode="reflect") for c in noise])
    norm = np.sqrt((disp ** 2).sum(axis=0)).max()
    peak = magnitude * min(dims[0], dims[1])
    return disp * (peak / norm) if norm > 0 else disp


def elastic_augment(v, m, magnitude, seed=0, sigma=8.0):
    """Apply one smooth random displacement to image (linear) and labels (nearest)."""
    if magnitude == 0:
        elastic_field(v.dims, magnitude)
        return v, m
    disp = elastic_field(v.dims, magnitude, seed, sigma)
    grid = np.indices(v.dims, dtype=np.float64)
    coords = grid - disp
    img = ndimage.map_coordinates(v.data.astype(np.float64), coords, order=1, mode="nearest")
    lab = ndimage.map_coordinates(m.labels, coords, order=0, mode="nearest")
    return v.with_data(img.astype(np.float32)), m.with_labels(lab.astype(np.uint8))
