"""Train one small model on synthetic clips, then encode and score a held-out sequence.

    python scripts/train_toy.py --variant me --steps 300 --out runs/toy
"""

import argparse
import logging
from pathlib import Path

from ctxcodec.ablation import EvalProtocol, evaluate_model, protocol_videos
from ctxcodec.config import TrainConfig, variant_config
from ctxcodec.training import train_cascaded

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=ROOT / "configs" / "ablation.json")
    ap.add_argument("--variant", default="me")
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--frames", type=int, default=32, help="length of the evaluation sequence")
    ap.add_argument("--out", default="runs/toy")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    config = variant_config(TrainConfig.load(args.config), args.variant).replace(steps=args.steps, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(step, loss):
        if step % 25 == 0:
            logging.info("step %d loss %.4f", step, loss)

    result = train_cascaded(config, log_path=out / "train_log.csv", progress=progress)
    result.model.save(out / "model.cmwt")
    videos = protocol_videos(EvalProtocol(sequences=1, frames=args.frames))
    (summary,), psnr, bpp = evaluate_model(result.model, videos)
    print(f"{args.variant}: {summary.bpp:.4f} bpp, {summary.psnr_db:.3f} dB, "
          f"RD cost {summary.rd_cost():.5f}; PSNR frame 1 {psnr[1]:.2f} dB -> last {psnr[-1]:.2f} dB")


if __name__ == "__main__":
    main()
