"""Acceptance suite: one test per headline criterion, each printing a PASS/FAIL line.

The ablation criteria train nine models.  Results are cached under
``results/ablation`` (keyed by config hash), normally filled beforehand by
``scripts/run_ablation.py``; if the cache is cold these tests train from
scratch, which takes hours on one CPU.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from conftest import randomise_heads, tiny_model_config, tiny_train_config
from ctxcodec.ablation import EvalProtocol, run_ablation
from ctxcodec.bitstream import I_FRAME
from ctxcodec.cli import main
from ctxcodec.codec import decode_latent, encode_latent, entropy_bits
from ctxcodec.codec.entropy import LATENT_MAX
from ctxcodec.codec.model import VideoCodec
from ctxcodec.codec.sequence import decode_sequence, encode_sequence
from ctxcodec.config import TrainConfig
from ctxcodec.context import ContextCompensation, CouplingStack, decoupling_loss
from ctxcodec.data import SceneSpec, render_sequence
from ctxcodec.evaluation import bd_rate, read_trace
from ctxcodec.ingest import Video, pad_frame
from ctxcodec.numerics import ParamStore, Tensor, backward, ops
from ctxcodec.numerics.gradcheck import check_gradients, primitive_cases
from ctxcodec.training import train_cascaded
from oracles import bd_rate_numeric

ROOT = Path(__file__).resolve().parent.parent
ABLATION_CONFIG = ROOT / "configs" / "ablation.json"
ABLATION_DIR = ROOT / "results" / "ablation"
ABLATION_SEEDS = (0, 1, 2)
DATA = Path(__file__).parent / "data"


def report(capsys, name: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def synthetic_video(seed: int, frames: int, size: int = 32) -> Video:
    seq = render_sequence(SceneSpec(size, size, frames), seed)
    return Video([pad_frame(f) for f in seq], size, size, name=f"syn{seed}")


# ---------------------------------------------------------------------------


def test_gradient_suite(capsys):
    start = time.perf_counter()
    worst, tensors, names = 0.0, 0, set()
    for seed in range(4):
        for name, (op, arrays) in primitive_cases(seed).items():
            errors = check_gradients(op, arrays, seed=seed)
            worst = max(worst, *errors)
            tensors += len(arrays)
            names.add(name)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-3 and tensors >= 100 and elapsed < 120
    report(capsys, "gradient suite", ok,
           f"{len(names)} primitives, {tensors} random tensors, max rel err {worst:.2e}, {elapsed:.1f}s")


def test_coupling_invertibility(capsys):
    worst = 0.0
    for case in range(500):
        rng = np.random.default_rng(case)
        channels = int(rng.choice([2, 4, 8]))
        stack = CouplingStack(rng, channels, 6, layers=int(rng.integers(1, 4)))
        for p in stack.parameters():
            p.data = rng.normal(0, 0.3, p.shape)  # float64, all weights random
        x = Tensor(rng.standard_normal((1, channels, 4, 4)))
        worst = max(worst, float(np.abs(stack.inverse(stack(x)).data - x.data).max()))
    report(capsys, "coupling invertibility", worst < 1e-5, f"500 cases, max abs error {worst:.2e}")


def test_decoupling_loss_values(capsys):
    got = (decoupling_loss(0.0, 1.0), decoupling_loss(1.0, 1.0), decoupling_loss(0.1, 0.0))
    want = (0.0, 1.0 / (1.0 + 1e-6), 0.01 / 1e-6)
    ok = got[0] == 0.0 and got[1] == want[1] and abs(got[2] - want[2]) <= 1e-12 * want[2]
    report(capsys, "decoupling loss values", ok, f"got {got}, want {want}")


def test_codec_consistency(capsys):
    start = time.perf_counter()
    mismatches, frames = 0, 0
    configs = [tiny_model_config(), tiny_model_config(orientation=False, compensation_mode="off"),
               tiny_model_config(compensation_mode="concat"), tiny_model_config(orientation=False)]
    for m in range(10):
        model = VideoCodec(configs[m % len(configs)], seed=m)
        if m % 3:  # untrained except for random output heads
            randomise_heads(model, seed=100 + m)
        if m == 9:  # one briefly trained checkpoint
            model = train_cascaded(tiny_train_config(steps=3, seed=9)).model
        for s in range(10):
            video = synthetic_video(1000 * m + s, 5)
            enc = encode_sequence(model, video, intra_period=3 if s % 2 else -1)
            _, dec = decode_sequence(model, enc.data)
            for a, b in zip(enc.frames, dec):
                frames += 1
                mismatches += int(not np.array_equal(a.reconstruction, b.reconstruction))
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 300
    report(capsys, "codec consistency", ok, f"10 models x 10 sequences, {frames} frames, "
                                            f"{mismatches} mismatches, {elapsed:.1f}s")


def test_range_coder(capsys):
    failures, worst_slack = 0, np.inf
    for seed in range(500):
        rng = np.random.default_rng(seed)
        planes = int(rng.integers(1, 6))
        shape = (1, planes, int(rng.integers(1, 9)), int(rng.integers(1, 9)))
        mu = rng.normal(0, 4, shape)
        scale = np.exp(rng.uniform(np.log(0.04), np.log(30), shape))
        y = np.clip(np.round(rng.normal(mu, scale)), -LATENT_MAX, LATENT_MAX).astype(np.float32)
        data = encode_latent(y, mu, scale)
        if not np.array_equal(decode_latent(data, mu, scale), y):
            failures += 1
        slack = entropy_bits(y, mu, scale) / 8 + 32 * planes - len(data)
        worst_slack = min(worst_slack, slack)
    ok = failures == 0 and worst_slack >= 0
    report(capsys, "range coder", ok, f"500 cases, {failures} round-trip failures, "
                                      f"min slack to entropy+32B/plane {worst_slack:.1f} bytes")


def test_bd_rate_oracle(capsys):
    anchor = [(0.05, 30), (0.1, 33), (0.2, 36), (0.4, 39)]
    test = [(0.04, 30), (0.08, 33), (0.16, 36), (0.32, 39)]
    fixture, oracle = bd_rate(anchor, test), bd_rate_numeric(anchor, test)
    same = bd_rate(anchor, anchor)
    half = bd_rate(anchor, [(r / 2, q) for r, q in anchor])
    ok = abs(fixture - oracle) < 0.1 and abs(same) < 1e-9 and abs(half + 50.0) <= 0.01
    report(capsys, "BD-rate oracle", ok,
           f"fixture {fixture:.4f}% vs oracle {oracle:.4f}%, identical {same:.2e}%, halved {half:.4f}%")


def test_zero_overhead_orientation(capsys):
    model = randomise_heads(VideoCodec(tiny_model_config(), seed=21), seed=22)
    video = synthetic_video(77, 96)
    enc = encode_sequence(model, video, intra_period=-1)
    _, dec = decode_sequence(model, enc.data)
    keys = [(a.hashes.prediction, a.hashes.oriented_flow, a.hashes.oriented_context) for a in enc.frames[1:]]
    differ = sum(a.hashes.as_tuple() != b.hashes.as_tuple() for a, b in zip(enc.frames, dec))
    ok = len(dec) == 96 and differ == 0 and all(None not in k for k in keys)
    report(capsys, "zero-overhead orientation", ok, f"96 frames, {differ} frames with differing "
                                                    "(prediction, oriented flow, oriented context) hashes")


def test_decoupling_training_direction(capsys):
    rng = np.random.default_rng(0)
    net = ContextCompensation(rng, 8, "full")
    for p in net.parameters():
        p.data = rng.normal(0, 0.1, p.shape).astype(p.dtype)
    batch = np.random.default_rng(1).standard_normal((2, 8, 16, 16)).astype(np.float32)
    store = ParamStore.from_module(net)

    def loss():
        _, terms = net(Tensor(batch[:1]), Tensor(batch[1:]))
        return ops.mean(decoupling_loss(terms.cor_l, terms.cor_g))

    initial = loss().item()
    for _ in range(200):
        store.zero_grad()
        backward(loss())
        store.step(store.grads(), 1e-3)
    final = loss().item()
    report(capsys, "decoupling training direction", final < initial, f"{initial:.5f} -> {final:.5f} after 200 steps")


# ---------------------------------------------------------------------------
# ablation (trained models)


@pytest.fixture(scope="module")
def ablation():
    config = TrainConfig.load(ABLATION_CONFIG)
    start = time.perf_counter()
    results = run_ablation(config, ["ma", "md", "me"], ABLATION_SEEDS, EvalProtocol(), ABLATION_DIR)
    return results, time.perf_counter() - start


def test_directional_ablation(ablation, capsys):
    results, _ = ablation
    cost = {k: float(np.mean([r.rd_cost for r in v])) for k, v in results.items()}
    train_hours = sum(r.train_seconds for v in results.values() for r in v) / 3600
    margin = 100 * (1 - cost["me"] / cost["ma"])
    ok = cost["me"] < cost["md"] < cost["ma"] and margin >= 1.0 and train_hours <= 8
    per_seed = {k: [round(r.rd_cost, 5) for r in v] for k, v in results.items()}
    report(capsys, "directional ablation", ok,
           f"mean RD cost ma {cost['ma']:.5f}, md {cost['md']:.5f}, me {cost['me']:.5f}; "
           f"me vs ma {-margin:+.2f}%; per seed {per_seed}; training {train_hours:.2f} CPU-h")


def test_error_propagation(ablation, capsys):
    results, _ = ablation
    decline = {k: float(np.mean([r.psnr_decline for r in results[k]])) for k in ("ma", "me")}
    ok = decline["me"] <= decline["ma"]
    report(capsys, "error propagation", ok,
           f"mean PSNR decline frame 1 -> 95: me {decline['me']:.3f} dB, ma {decline['ma']:.3f} dB")


# ---------------------------------------------------------------------------


def test_end_to_end_smoke(tmp_path, capsys):
    config = tmp_path / "train.json"
    tiny_train_config(steps=5, warmup_steps=3, flow_pretrain_steps=10).save(config)
    ckpt, stream = tmp_path / "m.cmwt", tmp_path / "s.dcmv"
    trace, summary = tmp_path / "trace.csv", tmp_path / "summary.json"
    source = "synthetic:4242:64"
    steps = [
        ["train", "--config", config, "--out", ckpt, "--seed", 0],
        ["encode", "--model", ckpt, "--input", source, "--frames", 96, "--intra-period", 32, "--out", stream],
        ["eval", "--model", ckpt, "--stream", stream, "--ref", source, "--trace", trace, "--summary", summary],
        ["bdrate", "--anchor", DATA / "rd_anchor.csv", "--test", DATA / "rd_test.csv"],
    ]
    codes = []
    with capsys.disabled():
        for argv in steps:
            codes.append(main([str(a) for a in argv]))
    rows = read_trace(trace) if trace.exists() else []
    intra = [r.t for r in rows if r.frame_type == "I"]
    ok = codes == [0, 0, 0, 0] and len(rows) == 96 and intra == [0, 32, 64]
    report(capsys, "end-to-end smoke", ok, f"exit codes {codes}, {len(rows)} trace rows, I-frames at {intra}")
    assert I_FRAME == 0
