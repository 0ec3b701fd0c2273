#!/usr/bin/env python3
"""Condition-number studies on the cracked square.

Two modes:
  sweep    worst-subdomain condition number against the interface shift
           eps for several ghost penalties (condition.csv)
  scaling  condition number against mesh size at a fixed good cut
           (condition_scaling.csv); the log-log slope should sit near -2

Both write their CSV plus the resolved config into the output directory.
"""

import argparse
import sys
from pathlib import Path

from latincut import cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("mode", choices=("sweep", "scaling"), nargs="?", default="sweep")
    ap.add_argument("--out", default=None, help="output directory (default out/<mode>)")
    ap.add_argument("--n", type=int, default=24, help="sweep mesh cells per side")
    ap.add_argument("--eps-values", default="0.25,0.01,0.0001,1e-06,1e-08,1e-11")
    ap.add_argument("--gamma-g-values", default="0.0,0.001,0.1")
    ap.add_argument("--base-n", type=int, default=12, help="scaling coarsest mesh")
    ap.add_argument("--levels", type=int, default=4, help="scaling refinement levels")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    outdir = Path(args.out if args.out else f"out/crack_{args.mode}")
    outdir.mkdir(parents=True, exist_ok=True)
    if args.mode == "sweep":
        lines = [
            "experiment = crack_condition_sweep",
            f"crack.n = {args.n}",
            f"crack.eps_values = {args.eps_values}",
            f"crack.gamma_g_values = {args.gamma_g_values}",
        ]
    else:
        lines = [
            "experiment = crack_condition_scaling",
            f"scaling.base_n = {args.base_n}",
            f"scaling.levels = {args.levels}",
        ]
    lines += [f"output.dir = {outdir}", f"workers = {args.workers}"]
    cfg = outdir / "study.cfg"
    cfg.write_text("\n".join(lines) + "\n", encoding="ascii")
    return cli.main(["run", str(cfg)])


if __name__ == "__main__":
    sys.exit(main())
