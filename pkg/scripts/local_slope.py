"""Local log-log slopes of a probability series from a rows.csv file.

Consecutive-pair slopes show where a series sits between its small-epsilon
regime and saturation, which a single windowed fit hides.

Usage: python scripts/local_slope.py results/gap_rect/rows.csv --series min_gap_scaled
"""
from __future__ import annotations

import argparse
import csv
import math
from collections import defaultdict


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("rows")
    p.add_argument("--series", required=True, help="series name or prefix")
    args = p.parse_args()
    groups = defaultdict(list)
    with open(args.rows, newline="") as fh:
        for r in csv.DictReader(fh):
            if r["series"].startswith(args.series) and r["epsilon"] and r["p_hat"]:
                groups[(r["law"], r["n"], r["series"])].append((float(r["epsilon"]), float(r["p_hat"])))
    for key, pts in groups.items():
        print(" ".join(key))
        pts.sort()
        for (e0, p0), (e1, p1) in zip(pts, pts[1:]):
            s = math.log(p1 / p0) / math.log(e1 / e0) if p0 > 0 and p1 > 0 else float("nan")
            print(f"  eps {e0:.4g}..{e1:.4g}  p {p0:.4g}..{p1:.4g}  local slope {s:.3f}")


if __name__ == "__main__":
    main()
