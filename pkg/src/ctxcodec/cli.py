"""``ctxcodec`` command line: train, encode, decode, eval, bdrate, trace-plot, dump-context, ablate.

Sources (``--input`` / ``--ref``) are a Y4M file, a raw ``.yuv`` file (with
``--width``/``--height``), a directory of PNGs, or ``synthetic:SEED[:SIZE]``
for a generated clip.  Failures print a single ``error: <kind>: <message>``
line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("ctxcodec")

EXIT_USAGE = 2
EXIT_FAILURE = 1


class CliError(Exception):
    """Bad combination of otherwise well-formed arguments."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # one line instead of argparse's usage dump
        sys.stderr.write(f"error: usage: {self.prog}: {message}\n")
        raise SystemExit(EXIT_USAGE)


# ---------------------------------------------------------------------------
# sources


def load_source(spec: str, frames: int | None = None, width: int | None = None, height: int | None = None,
                fmt: str = "auto", start: int = 0):
    from .data import SceneSpec, render_sequence
    from .ingest import SequenceSource, Video, ingest, pad_frame

    if spec.startswith("synthetic:"):
        parts = spec.split(":")[1:]
        try:
            seed = int(parts[0])
            size = int(parts[1]) if len(parts) > 1 else 64
        except (ValueError, IndexError):
            raise CliError(f"bad synthetic source {spec!r}; expected synthetic:SEED[:SIZE]") from None
        n = frames if frames is not None else 96
        seq = render_sequence(SceneSpec(size, size, start + n), seed)[start:]
        return Video([pad_frame(f) for f in seq], size, size, name=f"synthetic{seed}")
    if (width is None) != (height is None):
        raise CliError("--width and --height must be given together")
    return ingest(SequenceSource(Path(spec), fmt, width, height, frames, start))


def _add_source_args(p: argparse.ArgumentParser, flag: str = "--input") -> None:
    p.add_argument(flag, required=True, help="Y4M file, .yuv file, PNG directory or synthetic:SEED[:SIZE]")
    p.add_argument("--format", default="auto", choices=["auto", "y4m", "raw_yuv420", "png_directory"])
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--start", type=int, default=0, help="first source frame")


def _load_model(path):
    from .codec.model import VideoCodec

    return VideoCodec.load(path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    from .config import TrainConfig
    from .training import train_cascaded, write_log

    config = TrainConfig.load(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    if args.steps is not None:
        config = config.replace(steps=args.steps)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    def progress(step, loss):
        if step % 50 == 0 or step == config.steps - 1:
            log.info("step %d loss %.6f", step, loss)

    result = train_cascaded(config, progress=progress)
    result.model.save(out)
    log_path = Path(args.log) if args.log else out.with_suffix(".log.csv")
    write_log(log_path, result.rows)
    print(f"saved {out} ({len(result.rows)} log rows -> {log_path})")
    return 0


def cmd_encode(args) -> int:
    from .codec.sequence import encode_sequence

    if args.intra_period == 0 or args.intra_period < -1:
        raise CliError("--intra-period must be -1 or positive")
    model = _load_model(args.model)
    video = load_source(args.input, args.frames, args.width, args.height, args.format, args.start)
    n = args.frames if args.frames is not None else len(video)
    if n > len(video):
        raise CliError(f"--frames {n} exceeds the {len(video)} frames available")
    result = encode_sequence(model, video, args.intra_period, args.lambda_index, n)
    Path(args.out).write_bytes(result.data)
    if args.recon:
        _write_frames(args.recon, [r.reconstruction for r in result.frames])
    n_i = sum(1 for r in result.frames if r.frame_type == 0)
    bpp = sum(r.nbytes for r in result.frames) * 8 / (n * video.width * video.height)
    print(f"wrote {args.out}: {n} frames ({n_i} intra), {len(result.data)} bytes, {bpp:.4f} bpp")
    return 0


def _write_frames(out_dir, frames) -> None:
    from .ingest import write_png

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(frames):
        write_png(out / f"{t:05d}.png", frame)


def cmd_decode(args) -> int:
    from .codec.sequence import decode_sequence

    model = _load_model(args.model)
    header, records = decode_sequence(model, Path(args.input).read_bytes())
    _write_frames(args.out, [r.reconstruction for r in records])
    print(f"decoded {len(records)} frames ({header.width}x{header.height}) to {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .evaluation import eval_sequence, write_summary, write_trace

    model = _load_model(args.model)
    data = Path(args.stream).read_bytes()
    from .bitstream import read_header

    header = read_header(data)
    video = load_source(args.ref, header.frame_count, args.width, args.height, args.format, args.start)
    originals = [video.cropped(t) for t in range(len(video))]
    rows, summary = eval_sequence(model, data, originals, video.name)
    if args.trace:
        write_trace(args.trace, rows)
    if args.summary:
        write_summary(args.summary, [summary])
    print(f"{summary.name}: {summary.frames} frames, {summary.bpp:.6f} bpp, {summary.psnr_db:.4f} dB")
    return 0


def cmd_bdrate(args) -> int:
    from .evaluation import bd_rate, read_rd_csv

    print(f"{bd_rate(read_rd_csv(args.anchor), read_rd_csv(args.test)):.4f}")
    return 0


def cmd_trace_plot(args) -> int:
    from .evaluation import read_trace
    from .viz import plot_trace

    rows = read_trace(args.trace)
    if not rows:
        raise CliError(f"{args.trace} has no rows")
    plot_trace(rows, args.out, args.title)
    print(f"wrote {args.out}")
    return 0


def cmd_dump_context(args) -> int:
    from .codec.entropy import quantize
    from .codec.sequence import intra_reconstruction, intra_payload
    from .numerics import Tensor, no_grad
    from .viz import save_flow, save_heatmap

    model = _load_model(args.model)
    video = load_source(args.input, args.frame + 1, args.width, args.height, args.format, args.start)
    if args.frame < 1 or args.frame >= len(video):
        raise CliError(f"--frame must be a P-frame index in [1, {len(video) - 1}]")
    h, w = video.height, video.width
    recon = intra_reconstruction(intra_payload(video.frames[0], h, w), h, w)
    with no_grad():
        state = model.refresh_state(Tensor(recon[None]), 0)
        for t in range(1, args.frame):
            state = model.encode_p_frame(Tensor(video.frames[t][None]), state, (h, w)).state
        x = Tensor(video.frames[args.frame][None])
        flow = model.motion_estimator(state.ref_frame, x)
        flow_hat = model.motion_coder.decode(quantize(model.motion_coder.encode(flow)))
        side = model.decoder_side(flow_hat, state)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    written += save_flow(out / "flow", flow.data)
    written += save_flow(out / "flow_decoded", flow_hat.data)
    if side.oriented_flow is not None:
        written += save_flow(out / "flow_oriented", side.oriented_flow.data)
    if side.prediction is not None:
        from .ingest import write_png

        write_png(out / "warp_prediction.png", side.prediction.data[0])
        written.append(out / "warp_prediction.png")
    maps = {"context_propagated": side.propagated_c0, "context_modulated": side.contexts.c0,
            "context_oriented": side.oriented_context}
    if side.terms is not None:
        maps.update(global_oriented=side.terms.g_oriented, global_propagated=side.terms.g_propagated,
                    local_oriented=side.terms.l_oriented, local_propagated=side.terms.l_propagated)
    for name, tensor in maps.items():
        if tensor is not None:
            save_heatmap(out / f"{name}.png", tensor.data)
            written.append(out / f"{name}.png")
    print(f"wrote {len(written)} files to {out}")
    return 0


def cmd_ablate(args) -> int:
    from .ablation import EvalProtocol, format_table, run_ablation
    from .config import VARIANTS, TrainConfig

    config = TrainConfig.load(args.config) if args.config else TrainConfig()
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise CliError(f"unknown variants {unknown}; choose from {sorted(VARIANTS)}")
    if args.seed is not None and args.seeds is not None:
        raise CliError("--seed and --seeds are mutually exclusive")
    if args.seeds is not None:
        seeds = [int(s) for s in args.seeds.split(",")]
    else:
        seeds = [args.seed if args.seed is not None else config.seed]
    protocol = EvalProtocol(args.eval_sequences, args.eval_frames, args.eval_size, args.intra_period)
    results = run_ablation(config, variants, seeds, protocol, args.out, use_cache=not args.no_cache)
    table = format_table(results)
    out = Path(args.out)
    (out / "ablation.md").write_text(table + "\n")
    (out / "ablation.json").write_text(json.dumps(
        {k: [r.to_dict() for r in v] for k, v in results.items()}, indent=1) + "\n")
    print(table)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctxcodec", description="Learned video codec with context modulation.")
    parser.add_argument("--version", action="version", version=f"ctxcodec {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True,
                        help="all kernels are deterministic; the flag is accepted for interface stability")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="TrainConfig JSON (defaults if omitted)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="training log CSV (default: <out>.log.csv)")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int, help="override the config's step count")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="encode a sequence")
    p.add_argument("--model", required=True)
    _add_source_args(p)
    p.add_argument("--frames", type=int)
    p.add_argument("--intra-period", type=int, default=-1, help="I-frame spacing; -1 for only the first frame")
    p.add_argument("--lambda-index", type=int, default=1, choices=range(4), help="rate point stored in the header")
    p.add_argument("--out", required=True)
    p.add_argument("--recon", help="also write the encoder-side reconstructions as PNGs here")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a stream to PNGs")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="decode a stream and score it against the source")
    p.add_argument("--model", required=True)
    p.add_argument("--stream", required=True)
    _add_source_args(p, "--ref")
    p.add_argument("--trace", help="per-frame CSV")
    p.add_argument("--summary", help="JSON summary")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bdrate", help="BD-rate of --test against --anchor (bpp,psnr_db CSVs)")
    p.add_argument("--anchor", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(func=cmd_bdrate)

    p = sub.add_parser("trace-plot", help="per-frame PSNR/bpp plot as SVG")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--title")
    p.set_defaults(func=cmd_trace_plot)

    p = sub.add_parser("dump-context", help="write flows, prediction and context heatmaps for one frame")
    p.add_argument("--model", required=True)
    _add_source_args(p)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_context)

    p = sub.add_parser("ablate", help="train and evaluate ablation variants")
    p.add_argument("--config", help="base TrainConfig JSON")
    p.add_argument("--variants", default="ma,mb,mc,md,me")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--eval-sequences", type=int, default=2)
    p.add_argument("--eval-frames", type=int, default=96)
    p.add_argument("--eval-size", type=int, default=64)
    p.add_argument("--intra-period", type=int, default=-1)
    p.add_argument("--no-cache", action="store_true")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except KeyboardInterrupt:
        sys.stderr.write("error: interrupted\n")
        return 130
    except Exception as exc:  # noqa: BLE001 - every failure becomes one line
        msg = " ".join(str(exc).split()) or exc.__class__.__name__
        sys.stderr.write(f"error: {exc.__class__.__name__}: {msg}\n")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
