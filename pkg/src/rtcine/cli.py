"""``rtcine`` command line: convert, simulate, loss, measure, qa, stats.

Exit status is 0 on success, 2 on usage errors (argparse) and 1 on data
errors, with a one-line diagnostic on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import losses, qa, resp, segpost, stats, vessel
from .io import VolumeFormatError, from_array, load_volume, save_volume
from .phantoms import heart_phantom
from .volume import STRUCTURES, LabelVolume, Volume, normalize01

DEFAULT_SEED = 0
DEFAULT_PHANTOM_DIMS = (96, 64)
DEFAULT_SLICES = 20


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj))


def _dump_json(obj):
    def fix(x):
        if isinstance(x, float) and not np.isfinite(x):
            return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
        if isinstance(x, dict):
            return {k: fix(v) for k, v in x.items()}
        if isinstance(x, list):
            return [fix(v) for v in x]
        return x
    return json.dumps(fix(obj), indent=2, default=_json_default) + "\n"


def _emit(text, path=None):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# convert


def cmd_convert(args):
    src, dst = Path(args.input), Path(args.output)
    if src.suffix == ".npy":
        arr = np.load(src)
        v = from_array(arr, tuple(args.spacing), args.kind, args.frame_period)
        save_volume(v, dst)
    elif src.suffix in (".vcj", ".vcd"):
        v = load_volume(src)
        if dst.suffix != ".npy":
            raise ValueError("converting from a container requires a .npy output")
        np.save(dst, v.labels if isinstance(v, LabelVolume) else v.data)
    else:
        raise ValueError(f"unsupported input {src.suffix!r}; expected .npy or .vcj")
    return 0


# ---------------------------------------------------------------------------
# simulate


def _simulate_input(args, n_lr=None):
    if args.input:
        v = load_volume(args.input)
        if not isinstance(v, Volume):
            raise ValueError("simulate needs an intensity volume")
        return v
    if n_lr is None:
        n_lr = (args.n_slices or DEFAULT_SLICES) * args.factor
    v, _ = heart_phantom(DEFAULT_PHANTOM_DIMS + (n_lr,), seed=args.seed)
    return v


def cmd_simulate(args):
    out = Path(args.output)
    manifest_out = args.manifest_out or str(out.with_suffix("")) + ".manifest.json"
    if args.replay:
        manifest = resp.DegradeManifest.load(args.replay)
        v = _simulate_input(args, n_lr=manifest.input_dims[2])
        degraded = resp.replay(v, manifest)
    else:
        cfg = resp.RespiratoryConfig.random(args.seed, m=args.m, b=args.b, phi=args.phi, rr_mean=args.rr)
        v = _simulate_input(args)
        n_slices = -(-v.dims[2] // args.factor)
        if args.n_slices is not None and args.input and n_slices != args.n_slices:
            raise ValueError(f"input gives {n_slices} slices at factor {args.factor}, not {args.n_slices}")
        degraded, manifest = resp.degrade(v, cfg, factor=args.factor, band_prob=args.band_prob)
    save_volume(degraded, out)
    manifest.save(manifest_out)
    if args.lowres_out:
        save_volume(normalize01(resp.simulate_thick_slices(v, manifest.factor)), args.lowres_out)
    if args.field_out:
        low_dims = degraded.dims
        fld = resp.deformation_field(manifest.s_values, low_dims[:2])
        save_volume(field_to_volume(fld, degraded.spacing), args.field_out)
    return 0


def field_to_volume(fld, spacing):
    """Pack a deformation field as a 2-frame volume: frame 0 = dy, frame 1 = dx."""
    return Volume(np.stack([np.moveaxis(fld.dy, 0, -1), np.moveaxis(fld.dx, 0, -1)]), spacing)


def volume_to_field(v):
    if v.frames != 2:
        raise ValueError("a deformation field volume needs exactly 2 frames (dy, dx)")
    return resp.DeformationField(np.moveaxis(v.data[0], -1, 0), np.moveaxis(v.data[1], -1, 0))


# ---------------------------------------------------------------------------
# loss


def _labels_arg(path):
    v = load_volume(path)
    if not isinstance(v, LabelVolume):
        raise ValueError(f"{path} is not a label volume")
    return v


def _image_arg(path):
    v = load_volume(path)
    if not isinstance(v, Volume):
        raise ValueError(f"{path} is not an intensity volume")
    return v


def cmd_loss(args):
    name = args.loss
    if name == "smooth":
        value = losses.deformation_smoothness(volume_to_field(_image_arg(args.a)))
    else:
        if args.b is None:
            raise ValueError(f"--loss {name} needs two inputs")
        if name in ("mae", "gmae", "combined"):
            a, b = _image_arg(args.a), _image_arg(args.b)
            fn = {"mae": losses.mae, "gmae": losses.gmae, "combined": losses.combined_image_loss}[name]
            value = fn(a, b)
        else:
            p, g = losses.one_hot(_labels_arg(args.a)), losses.one_hot(_labels_arg(args.b))
            if name == "ftl":
                value = losses.focal_tversky(p.astype(float), g.astype(float))
            elif name == "surface":
                value = losses.surface_area_loss(p, g)
            else:
                value = float(np.mean([losses.dice(pc, gc) for pc, gc in zip(p, g)]))
    _emit(_dump_json({"loss": name, "value": value}), args.out)
    return 0


# ---------------------------------------------------------------------------
# measure


def _clean(labels, threads):
    if labels.frames is None or threads <= 1:
        return segpost.clean_islands(labels)
    with ThreadPoolExecutor(threads) as pool:
        frames = list(pool.map(lambda f: segpost.clean_islands(labels.frame(f)).labels,
                               range(labels.frames)))
    return labels.with_labels(np.stack(frames))


def cmd_measure_volumes(args):
    labels = _labels_arg(args.labels)
    if args.clean:
        labels = _clean(labels, args.threads)
    curves, metrics = segpost.measure_volumes(labels, args.structures)
    rows = []
    for s, curve in curves.items():
        rows.extend((f, s, repr(float(v))) for f, v in enumerate(curve.volumes_ml))
    csv_text = _csv_text(["frame", "structure", "volume_ml"], rows)
    json_text = _dump_json({s: m.to_dict() for s, m in metrics.items()})
    if args.csv_out or args.json_out:
        if args.csv_out:
            _emit(csv_text, args.csv_out)
        if args.json_out:
            _emit(json_text, args.json_out)
    else:
        _emit(json_text if args.format == "json" else csv_text)
    return 0


def parse_landmark(text):
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"landmark must look like name=value, got {text!r}")
    parts = value.split(",")
    try:
        where = float(parts[0]) if len(parts) == 1 else tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad landmark value {value!r}") from None
    if isinstance(where, tuple) and len(where) != 3:
        raise argparse.ArgumentTypeError("landmark point needs 3 coordinates")
    return name, where


def cmd_measure_vessels(args):
    labels = _labels_arg(args.labels)
    report = vessel.vessel_report(labels, dict(args.landmark), frame=args.frame)
    if args.format == "json" and not args.csv_out:
        payload = {row: {"landmark": m.landmark, "diameter_mm": m.diameter_mm,
                         "ray_min_mm": m.ray_min_mm, "ray_max_mm": m.ray_max_mm}
                   for row, m in report.items()}
        _emit(_dump_json(payload))
        return 0
    rows = [(row, repr(m.diameter_mm), repr(m.ray_min_mm), repr(m.ray_max_mm))
            for row, m in report.items()]
    _emit(_csv_text(["landmark", "diameter_mm", "ray_min_mm", "ray_max_mm"], rows), args.csv_out)
    return 0


# ---------------------------------------------------------------------------
# qa / stats


_AXES = {"hf": 0, "ap": 1, "lr": 2}


def cmd_qa(args):
    if args.metric in ("es", "contrast"):
        img, lab = _image_arg(args.a), _labels_arg(args.b)
        axis = _AXES[args.axis]
        img2d = np.take(img.frame(args.frame).data, args.slice, axis=axis)
        lab2d = np.take(lab.frame(args.frame).labels, args.slice, axis=axis)
        pixel = [sp for i, sp in enumerate(img.spacing) if i != axis][0]
        prof = qa.intensity_profile(img2d, lab2d, pixel_mm=pixel)
        value = qa.edge_sharpness(prof) if args.metric == "es" else qa.contrast(prof)
    else:
        a, b = _image_arg(args.a), _image_arg(args.b)
        value = {"ssim": qa.ssim, "psnr": qa.psnr, "mse": qa.mse}[args.metric](a, b)
    _emit(_dump_json({"metric": args.metric, "value": value}), args.out)
    return 0


def read_pairs(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or not "".join(rec).strip():
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except (ValueError, IndexError):
                if rows:
                    raise ValueError(f"bad row in {path}: {rec}") from None
                # header line
    if not rows:
        raise ValueError(f"no pairs in {path}")
    return np.array(rows)


def cmd_stats(args):
    if args.bland_altman:
        result = stats.bland_altman(read_pairs(args.bland_altman), with_p=True).to_dict()
    else:
        pairs = read_pairs(args.wilcoxon)
        result = {"n": int(len(pairs)), "p_value": stats.wilcoxon_signed_rank(pairs)}
    _emit(_dump_json(result), args.out)
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="rtcine", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    # the same global flags are accepted after the subcommand as well
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", parents=[common], help="raw .npy <-> volume container")
    c.add_argument("input")
    c.add_argument("output")
    c.add_argument("--spacing", type=float, nargs=3, default=(1.5, 1.5, 1.5))
    c.add_argument("--kind", choices=("intensity", "labels"), default="intensity")
    c.add_argument("--frame-period", type=float, default=None)
    c.set_defaults(func=cmd_convert)

    s = sub.add_parser("simulate", parents=[common],
                       help="thick-slice + respiratory + banding degradation")
    s.add_argument("--input", help="HighRes intensity volume (default: heart phantom)")
    s.add_argument("--output", default="simulated.vcj")
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--m", type=float, default=None, help="breathing magnitude")
    s.add_argument("--b", type=float, default=None, help="breathing period (s)")
    s.add_argument("--phi", type=float, default=None, help="breathing phase (rad)")
    s.add_argument("--rr", type=float, default=None, help="mean R-R interval (s)")
    s.add_argument("--n-slices", type=int, default=None,
                   help=f"LR slice count (phantom default {DEFAULT_SLICES})")
    s.add_argument("--factor", type=int, default=resp.THICK_FACTOR)
    s.add_argument("--band-prob", type=float, default=resp.BAND_PROB)
    s.add_argument("--manifest-out")
    s.add_argument("--replay", metavar="MANIFEST")
    s.add_argument("--lowres-out", help="also write the clean thick-slice volume, normalized to [0, 1]")
    s.add_argument("--field-out", help="also write the deformation field (2 frames: dy, dx)")
    s.set_defaults(func=cmd_simulate)

    lo = sub.add_parser("loss", parents=[common], help="evaluate a loss between two volumes")
    lo.add_argument("--loss", required=True,
                    choices=("mae", "gmae", "combined", "smooth", "ftl", "surface", "dice"))
    lo.add_argument("a")
    lo.add_argument("b", nargs="?")
    lo.add_argument("--out")
    lo.set_defaults(func=cmd_loss)

    me = sub.add_parser("measure", parents=[common], help="ventricular volumes or vessel diameters")
    msub = me.add_subparsers(dest="what", required=True)
    mv = msub.add_parser("volumes", parents=[common])
    mv.add_argument("labels")
    mv.add_argument("--structures", nargs="+", default=["LV", "RV"], choices=STRUCTURES)
    mv.add_argument("--clean", action="store_true", help="remove islands first")
    mv.add_argument("--csv-out")
    mv.add_argument("--json-out")
    mv.set_defaults(func=cmd_measure_volumes)
    ms = msub.add_parser("vessels", parents=[common])
    ms.add_argument("labels")
    ms.add_argument("--frame", type=int, default=vessel.REPORT_FRAME, help="1-based cine frame")
    ms.add_argument("--landmark", type=parse_landmark, action="append", required=True,
                    help="name=arc_fraction or name=x,y,z (mm)")
    ms.add_argument("--csv-out")
    ms.set_defaults(func=cmd_measure_vessels)

    q = sub.add_parser("qa", parents=[common], help="image quality metrics")
    q.add_argument("--metric", required=True, choices=("es", "contrast", "ssim", "psnr", "mse"))
    q.add_argument("a", help="image (es/contrast) or first volume")
    q.add_argument("b", help="labels (es/contrast) or second volume")
    q.add_argument("--axis", choices=tuple(_AXES), default="hf",
                   help="slice normal for es/contrast (hf: axial plane, holds both ventricles)")
    q.add_argument("--slice", type=int, default=0, help="slice index along --axis for es/contrast")
    q.add_argument("--frame", type=int, default=0)
    q.add_argument("--out")
    q.set_defaults(func=cmd_qa)

    st = sub.add_parser("stats", parents=[common],
                        help="paired agreement statistics from a two-column CSV")
    g = st.add_mutually_exclusive_group(required=True)
    g.add_argument("--bland-altman", metavar="PAIRS_CSV")
    g.add_argument("--wilcoxon", metavar="PAIRS_CSV")
    st.add_argument("--out")
    st.set_defaults(func=cmd_stats)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, IndexError, KeyError, FileNotFoundError, VolumeFormatError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"rtcine: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
