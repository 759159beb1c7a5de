"""Regenerate the bundled toy population, its schema and region map.

    python3 scripts/make_toy_data.py [--n 3000] [--seed 20240501] [--out data]
"""
import argparse
from pathlib import Path

from geosynth.data_model import save_csv, save_schema
from geosynth.simulate import simulate_population


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=3000)
    ap.add_argument("--seed", type=int, default=20240501)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds, regions = simulate_population(args.n, args.seed)
    save_csv(ds, out / "toy_population.csv")
    save_schema(ds.schema, out / "toy_schema.yaml")
    regions.to_csv(out / "toy_regions.csv")
    print(f"wrote {ds.n} records and {len(regions.ids)} regions to {out}")


if __name__ == "__main__":
    main()
