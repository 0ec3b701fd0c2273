#!/usr/bin/env python3
"""Mesh-convergence study for the ellipse contact benchmark.

Runs a ladder of nested meshes plus a one-finer reference, writes
convergence.csv (per-level errors and rates) and iterations.csv (error of
the finest ladder level against the reference at the monitor iterations)
into the output directory.  The defaults reproduce the headline study;
--quick shrinks it to something that finishes in well under a minute.
"""

import argparse
import sys
from pathlib import Path

from latincut import cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/ellipse", help="output directory")
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--base-nx", type=int, default=40)
    ap.add_argument("--it-max", type=int, default=200)
    ap.add_argument("--nu", type=float, default=0.3)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--profiles", action="store_true",
                    help="also write normal-traction profiles on the finest level")
    ap.add_argument("--quick", action="store_true",
                    help="2 levels from nx=12, 40 iterations")
    args = ap.parse_args()
    if args.quick:
        args.levels, args.base_nx, args.it_max = 2, 12, 40

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = [
        "experiment = ellipse_convergence",
        f"output.dir = {outdir}",
        f"workers = {args.workers}",
        f"study.levels = {args.levels}",
        f"study.base_nx = {args.base_nx}",
        f"study.nu = {args.nu}",
        f"latin.it_max = {args.it_max}",
        f"study.reference_it_max = {max(args.it_max, 200 if not args.quick else args.it_max)}",
        f"export.profiles = {'true' if args.profiles else 'false'}",
    ]
    cfg = outdir / "study.cfg"
    cfg.write_text("\n".join(lines) + "\n", encoding="ascii")
    return cli.main(["run", str(cfg)])


if __name__ == "__main__":
    sys.exit(main())
