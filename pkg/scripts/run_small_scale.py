"""Small-scale experiment: every attack on the 15-agent preset, averaged over Monte-Carlo runs."""

import argparse
import logging
from pathlib import Path

from resilient_gne.attacks import KINDS
from resilient_gne.cli import run_batch
from resilient_gne.config import load_preset, with_overrides


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rounds", type=int, default=2000)
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results/small_scale"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    print(f"{'attack':<20}{'regret slope':>14}{'cv slope':>10}{'final dist':>12}")
    for kind in KINDS:
        cfg = with_overrides(load_preset("small_scale"), attack=kind, rounds=args.rounds, runs=args.runs,
                             seed=args.seed, out=args.out / kind)
        _, s = run_batch(cfg, workers=args.workers)
        fmt = lambda v: "n/a" if v is None else f"{v:.3f}"  # noqa: E731
        print(f"{kind:<20}{fmt(s['slope_regret']):>14}{fmt(s['slope_cv']):>10}{s['final_mean_dist_to_sgne']:>12.3f}")


if __name__ == "__main__":
    main()
