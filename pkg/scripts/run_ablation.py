"""Train and evaluate the ablation variants over several seeds.

Results are cached per (variant, seed, config hash) in the output directory,
which is where the acceptance suite looks for them.

    python scripts/run_ablation.py --variants ma,md,me --seeds 0,1,2
"""

import argparse
import json
import logging
import time
from pathlib import Path

from ctxcodec.ablation import EvalProtocol, format_table, run_ablation
from ctxcodec.config import TrainConfig

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=ROOT / "configs" / "ablation.json")
    ap.add_argument("--out", default=ROOT / "results" / "ablation")
    ap.add_argument("--variants", default="ma,md,me")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--no-cache", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    config = TrainConfig.load(args.config)
    start = time.perf_counter()
    results = run_ablation(config, args.variants.split(","), [int(s) for s in args.seeds.split(",")],
                           EvalProtocol(), args.out, use_cache=not args.no_cache)
    table = format_table(results)
    out = Path(args.out)
    (out / "ablation.md").write_text(table + "\n")
    (out / "ablation.json").write_text(json.dumps({k: [r.to_dict() for r in v] for k, v in results.items()},
                                                  indent=1) + "\n")
    print(table)
    train_h = sum(r.train_seconds for v in results.values() for r in v) / 3600
    print(f"training time {train_h:.2f} h, wall {(time.perf_counter() - start) / 3600:.2f} h")


if __name__ == "__main__":
    main()
