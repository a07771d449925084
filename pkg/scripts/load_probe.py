"""Communication PUPE of the practical receiver at a fixed E/N0 as the single-slot load grows.

Shows where the TIN first stage stops resolving users (roughly K_c beyond 2M / SINR threshold).
"""

import argparse

from unisac.config import SystemConfig
from unisac.harness import run_trials


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ebn0", type=float, default=30.0)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--loads", default="10+10,20+20,25+25,30+30,40+40,20+0,30+0,40+0")
    args = ap.parse_args()
    for spec in args.loads.split(","):
        k_c, k_s = (int(v) for v in spec.split("+"))
        cfg = SystemConfig(n=1024, k_c=k_c, k_s=k_s, ebn0_db=args.ebn0)
        agg = run_trials(cfg, trials=args.trials).summary()
        print(f"{spec:>6s}  pupe={agg.pupe:.3f}  comm={agg.pupe_comm:.3f}  sens={agg.pupe_sens:.3f}")


if __name__ == "__main__":
    main()
