"""Volume container: ``<name>.vcj`` JSON header + ``<name>.vcd`` raw payload.

Intensities are stored as little-endian float32, labels as uint8, both in
C order of ``(frames, hf, ap, lr)``.
"""
import json
from pathlib import Path

import numpy as np

from .volume import LABEL_NAMES, LabelVolume, Volume

SCHEMA_VERSION = 1
_DTYPES = {"f32le": np.dtype("<f4"), "u8": np.dtype("u1")}


class VolumeFormatError(ValueError):
    """Raised for malformed headers or payloads."""


def _paths(path):
    path = Path(path)
    if path.suffix in (".vcj", ".vcd"):
        path = path.with_suffix("")
    return path.with_suffix(".vcj"), path.with_suffix(".vcd")


def save_volume(v, path):
    """Write ``v`` and return the header path."""
    header_path, payload_path = _paths(path)
    header_path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(v, LabelVolume):
        payload = np.ascontiguousarray(v.labels, dtype=_DTYPES["u8"])
        dtype, kind, names = "u8", "labels", list(v.label_names)
    else:
        payload = np.ascontiguousarray(v.data, dtype=_DTYPES["f32le"])
        dtype, kind, names = "f32le", "intensity", []
    header = {
        "schema_version": SCHEMA_VERSION,
        "dims": [int(d) for d in v.dims],
        "spacing_mm": [float(s) for s in v.spacing],
        "frames": v.frames,
        "frame_period_s": v.frame_period,
        "dtype": dtype,
        "kind": kind,
        "label_names": names,
    }
    header_path.write_text(json.dumps(header, indent=2) + "\n")
    payload_path.write_bytes(payload.tobytes())
    return header_path


def _read_header(header_path):
    try:
        header = json.loads(Path(header_path).read_text())
    except json.JSONDecodeError as exc:
        raise VolumeFormatError(f"malformed header: {exc}") from None
    required = ("schema_version", "dims", "spacing_mm", "dtype", "kind")
    missing = [k for k in required if k not in header]
    if missing:
        raise VolumeFormatError(f"malformed header: missing {', '.join(missing)}")
    if header["schema_version"] != SCHEMA_VERSION:
        raise VolumeFormatError(f"malformed header: unsupported schema_version {header['schema_version']}")
    dims = header["dims"]
    if len(dims) != 3 or any(not isinstance(d, int) or d < 1 for d in dims):
        raise VolumeFormatError(f"malformed header: bad dims {dims}")
    spacing = header["spacing_mm"]
    if len(spacing) != 3 or any(not isinstance(s, (int, float)) or s <= 0 for s in spacing):
        raise VolumeFormatError(f"malformed header: bad spacing {spacing}")
    frames = header.get("frames")
    if frames is not None and (not isinstance(frames, int) or frames < 1):
        raise VolumeFormatError(f"malformed header: bad frames {frames}")
    if header["dtype"] not in _DTYPES:
        raise VolumeFormatError(f"unsupported dtype {header['dtype']!r}")
    if header["kind"] not in ("intensity", "labels"):
        raise VolumeFormatError(f"malformed header: bad kind {header['kind']!r}")
    return header


def load_volume(path):
    """Read a container written by :func:`save_volume`."""
    header_path, payload_path = _paths(path)
    if not header_path.exists():
        raise FileNotFoundError(header_path)
    header = _read_header(header_path)
    dtype = _DTYPES[header["dtype"]]
    frames = header.get("frames")
    shape = tuple(header["dims"])
    if frames is not None:
        shape = (frames,) + shape
    raw = payload_path.read_bytes()
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(raw) != expected:
        raise VolumeFormatError(
            f"payload length mismatch: expected {expected} bytes, found {len(raw)}")
    arr = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    spacing = tuple(header["spacing_mm"])
    period = header.get("frame_period_s")
    if header["kind"] == "labels":
        if header["dtype"] != "u8":
            raise VolumeFormatError("label volumes must use dtype u8")
        names = tuple(header.get("label_names") or LABEL_NAMES)
        return LabelVolume(arr, spacing, period, names)
    if header["dtype"] != "f32le":
        raise VolumeFormatError("intensity volumes must use dtype f32le")
    return Volume(arr, spacing, period)


def from_array(arr, spacing=(1.5, 1.5, 1.5), kind="intensity", frame_period=None):
    """Wrap a raw numpy array as a Volume or LabelVolume."""
    if kind == "labels":
        return LabelVolume(np.asarray(arr), spacing, frame_period)
    return Volume(np.asarray(arr, dtype=np.float32), spacing, frame_period)
