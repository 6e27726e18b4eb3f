"""Large-scale experiment: the 100-agent preset under one attack."""

import argparse
import logging
from pathlib import Path

from resilient_gne.cli import run_batch
from resilient_gne.config import load_preset, with_overrides


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--attack", default="max_value")
    ap.add_argument("--rounds", type=int, default=500)
    ap.add_argument("--runs", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results/large_scale"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = with_overrides(load_preset("large_scale"), attack=args.attack, rounds=args.rounds, runs=args.runs,
                         seed=args.seed, out=args.out)
    code, s = run_batch(cfg, workers=args.workers)
    print(f"regret slope {s['slope_regret']}, cv slope {s['slope_cv']}, "
          f"final distance {s['final_mean_dist_to_sgne']:.3f}, violations {sum(s['invariant_violations'].values())}")
    raise SystemExit(code)


if __name__ == "__main__":
    main()
