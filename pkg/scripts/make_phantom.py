"""Write the synthetic four-chamber + two-vessel phantom to disk.

    python3 scripts/make_phantom.py out/ --frames 32

Produces ``hr.vcj`` (static intensity volume, first frame) and
``labels.vcj`` (label cine), ready for ``rtcine simulate`` and
``rtcine measure``.
"""
import argparse
from pathlib import Path

from rtcine.io import save_volume
from rtcine.phantoms import heart_phantom


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("outdir", type=Path)
    ap.add_argument("--dims", type=int, nargs=3, default=(96, 64, 80), metavar=("HF", "AP", "LR"))
    ap.add_argument("--frames", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    args.outdir.mkdir(parents=True, exist_ok=True)
    img, labels = heart_phantom(tuple(args.dims), frames=args.frames, seed=args.seed)
    save_volume(img.frame(0), args.outdir / "hr.vcj")
    save_volume(labels, args.outdir / "labels.vcj")
    print(f"wrote {args.outdir / 'hr.vcj'} and {args.outdir / 'labels.vcj'}")


if __name__ == "__main__":
    main()
