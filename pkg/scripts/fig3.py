"""Required E/N0 against total users at n=5000: achievable bound and ideal benchmarks."""

import argparse
import logging

from unisac.harness import export, reproduce_figure


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scale", choices=("desk", "full"), default="desk")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trials", type=int)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="fig3.csv")
    ap.add_argument("--plotdata", default="fig3.dat")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    res = reproduce_figure("fig3", args.scale, seed=args.seed, trials=args.trials, workers=args.workers)
    export(res, args.out, "csv")
    export(res, args.plotdata, "plotdata")
    for model in res.models:
        xs, vs = res.series(model)
        print(f"{model:28s} " + "  ".join(f"{x:g}:{v:.4g}" for x, v in zip(xs, vs)))


if __name__ == "__main__":
    main()
