"""Cluster count and size of MDAV on uniform random points.

    python3 scripts/mdav_full_scale.py [--n 3333998] [--k 15000] [--index grid]
"""
import argparse
import time

import numpy as np

from geosynth.mdav import mdav_partition


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=3_333_998)
    ap.add_argument("--k", type=int, default=15_000)
    ap.add_argument("--index", choices=["auto", "grid", "scan"], default="grid")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    pts = np.random.default_rng(args.seed).uniform(0, 1e6, size=(args.n, 2))
    t0 = time.perf_counter()
    part = mdav_partition(pts, args.k, args.index)
    sizes = part.sizes
    print(f"n={args.n} k={args.k}: {part.C} clusters, sizes {sizes.min()}..{sizes.max()}, "
          f"last {sizes[-1]}, {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
