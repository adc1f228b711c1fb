"""Short-clip versus long-clip training on the same step budget.

Trains the plain variant with 7-frame and 32-frame clips and compares their
RD cost on the 96-frame held-out sequences.

    python scripts/long_sequence.py --seeds 0
"""

import argparse
import logging
from pathlib import Path

import numpy as np

from ctxcodec.ablation import EvalProtocol, format_table, run_ablation
from ctxcodec.config import TrainConfig

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=ROOT / "configs" / "ablation.json")
    ap.add_argument("--out", default=ROOT / "results" / "ablation")
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--steps", type=int, help="override the step count (long clips cost ~5x per step)")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    base = TrainConfig.load(args.config).replace(frames_per_clip=7)
    if args.steps:
        base = base.replace(steps=args.steps)
    seeds = [int(s) for s in args.seeds.split(",")]
    results = run_ablation(base, ["ma", "mf"], seeds, EvalProtocol(), args.out)
    print(format_table(results))
    short, long_ = (np.mean([r.rd_cost for r in results[k]]) for k in ("ma", "mf"))
    print(f"32-frame clips {'beat' if long_ < short else 'did not beat'} 7-frame clips: "
          f"{long_:.5f} vs {short:.5f}")


if __name__ == "__main__":
    main()
