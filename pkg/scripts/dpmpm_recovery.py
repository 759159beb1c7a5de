"""Modal occupied-class count of DPMPM chains on two-class mixtures.

    python3 scripts/dpmpm_recovery.py [--agreement 0.999] [--chains 20] [--iterations 4000]
"""
import argparse
import time

import numpy as np

from geosynth.dpmpm import DpmpmConfig, run_chain
from geosynth.simulate import two_class_codes


def modal_count(occupied) -> int:
    values, counts = np.unique(np.asarray(occupied), return_counts=True)
    return int(values[np.argmax(counts)])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--agreement", type=float, default=0.999)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--chains", type=int, default=20)
    ap.add_argument("--iterations", type=int, default=4000)
    ap.add_argument("--burn-in", type=int, default=2000)
    ap.add_argument("--thin", type=int, default=10)
    args = ap.parse_args()
    cfg = DpmpmConfig(iterations=args.iterations, burn_in=args.burn_in, thin=args.thin)
    hits = 0
    for seed in range(args.chains):
        Y = two_class_codes(args.n, 4, args.agreement, seed=1000 + seed)
        t0 = time.perf_counter()
        _, trace = run_chain(Y, [2] * 4, cfg, np.random.default_rng(seed))
        mode = modal_count(trace.occupied_classes)
        hits += mode == 2
        values, counts = np.unique(trace.occupied_classes, return_counts=True)
        print(f"chain {seed:2d}: mode {mode}  {dict(zip(values.tolist(), counts.tolist()))}  "
              f"{time.perf_counter() - t0:.1f}s", flush=True)
    print(f"modal count 2 in {hits}/{args.chains} chains")


if __name__ == "__main__":
    main()
