#!/usr/bin/env python3
"""Run the bundled pick-style case study under all three control
architectures and print the RMSE comparison table.

Usage:
    python scripts/run_case_study.py [--out-dir out/case_study] [--seed 0]

Artifacts (per architecture): trace.csv, summary.json; plus the ranked
comparison.json / comparison.csv.
"""

import argparse
import json
from pathlib import Path

from cablearm.cli import bundled_scenario_text, compare_architectures


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="out/case_study")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for arch in ("independent", "integrated1", "integrated2"):
        p = out / f"scenario_{arch}.json"
        p.write_text(bundled_scenario_text(f"case_study_{arch}"))
        paths.append(str(p))
    table = compare_architectures(paths, out, seed=args.seed)
    print(json.dumps(table, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
