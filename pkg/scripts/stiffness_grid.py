#!/usr/bin/env python3
"""Emit the lower-tension stiffness landscape as a plot-ready CSV grid.

At the holding pose the two upper cable groups are frozen at the given
unstretched lengths; the two lower tension commands sweep their bound box
and the eigenvalue objective plus the smallest stiffness eigenvalue are
tabulated for each grid point.

Usage:
    python scripts/stiffness_grid.py [--l01 1.005] [--l02 1.005] [--resolution 76]
"""

import argparse

from cablearm.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--px", type=float, default=0.0)
    ap.add_argument("--pz", type=float, default=0.0)
    ap.add_argument("--l01", type=float, default=1.005)
    ap.add_argument("--l02", type=float, default=1.005)
    ap.add_argument("--resolution", type=int, default=76)
    ap.add_argument("--out-dir", default="out/stiffness")
    args = ap.parse_args()
    raise SystemExit(cli_main([
        "optimize-stiffness",
        "--px", str(args.px), "--pz", str(args.pz),
        "--l01", str(args.l01), "--l02", str(args.l02),
        "--resolution", str(args.resolution),
        "--out-dir", args.out_dir,
    ]))


if __name__ == "__main__":
    main()
