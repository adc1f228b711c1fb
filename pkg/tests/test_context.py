import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxcodec.context import (
    DECOUPLE_DELTA,
    AffineCoupling,
    ContextCompensation,
    ContextSet,
    CouplingStack,
    PropagationState,
    TemporalContextMiner,
    affine_coupling_forward,
    affine_coupling_inverse,
    compensate_context,
    cosine_correlation,
    decoupling_loss,
    mine_temporal_context,
)
from ctxcodec.flow import warp
from ctxcodec.numerics import ParamStore, ShapeError, Tensor, backward, ops
from ctxcodec.numerics.gradcheck import check_gradients


def randomise(module, rng, std=0.3, dtype=None):
    """Give zero-initialised layers random weights so inverses are non-trivial."""
    for p in module.parameters():
        p.data = rng.normal(0, std, p.shape).astype(dtype or p.dtype)


# -- temporal context mining --------------------------------------------------


def test_miner_shapes_and_zero_flow():
    rng = np.random.default_rng(0)
    miner = TemporalContextMiner(rng, feat_channels=5, ctx_channels=6, hidden=7)
    feat = Tensor(rng.standard_normal((2, 5, 16, 16)).astype(np.float32))
    ctx = mine_temporal_context(miner, PropagationState(Tensor(np.zeros((2, 3, 16, 16))), feat), Tensor(
        np.zeros((2, 2, 16, 16), dtype=np.float32)))
    assert ctx.c0.shape == (2, 6, 16, 16)
    assert ctx.c1.shape == (2, 6, 8, 8)
    assert ctx.c2.shape == (2, 6, 4, 4)
    f0 = ops.leaky_relu(miner.level0(feat))
    f1 = ops.leaky_relu(miner.level1(f0))
    f2 = ops.leaky_relu(miner.level2(f1))
    for got, f, net in zip((ctx.c0, ctx.c1, ctx.c2), (f0, f1, f2), miner.refine):
        assert np.array_equal(got.data, net(f).data)


def test_flow_pyramid_halves_values():
    flow = np.zeros((1, 2, 16, 16), dtype=np.float32)
    flow[:, 0] = 2.0
    levels = TemporalContextMiner.flow_pyramid(Tensor(flow))
    assert np.allclose(levels[1].data[:, 0], 1.0) and np.allclose(levels[1].data[:, 1], 0.0)
    assert np.allclose(levels[2].data[:, 0], 0.5)


def test_miner_uses_scaled_flow_at_level_one():
    rng = np.random.default_rng(1)
    miner = TemporalContextMiner(rng, 3, 4, 4)
    feat = Tensor(rng.standard_normal((1, 3, 16, 16)).astype(np.float32))
    flow = np.zeros((1, 2, 16, 16), dtype=np.float32)
    flow[:, 0] = 2.0
    ctx = miner(PropagationState(None, feat), Tensor(flow))
    f1 = ops.leaky_relu(miner.level1(ops.leaky_relu(miner.level0(feat))))
    shifted = np.zeros((1, 2, 8, 8), dtype=np.float32)
    shifted[:, 0] = 1.0
    assert np.allclose(ctx.c1.data, miner.refine[1](warp(f1, Tensor(shifted))).data, atol=1e-6)


def test_miner_extent_mismatch():
    miner = TemporalContextMiner(np.random.default_rng(0), 3, 4, 4)
    with pytest.raises(ShapeError):
        miner(PropagationState(None, Tensor(np.zeros((1, 3, 16, 16)))), Tensor(np.zeros((1, 2, 8, 8))))


def test_context_set_scale_check():
    with pytest.raises(ShapeError):
        ContextSet(Tensor(np.zeros((1, 2, 16, 16))), Tensor(np.zeros((1, 2, 8, 8))), Tensor(np.zeros((1, 2, 8, 8))))


# -- affine coupling ----------------------------------------------------------


def test_fresh_coupling_is_identity():
    layer = AffineCoupling(np.random.default_rng(0), 4, 8)
    x = Tensor(np.random.default_rng(1).standard_normal((1, 4, 5, 5)).astype(np.float32))
    assert np.array_equal(affine_coupling_forward(x, layer).data, x.data)
    assert np.array_equal(affine_coupling_inverse(x, layer).data, x.data)


def test_odd_channels_rejected():
    with pytest.raises(ShapeError):
        AffineCoupling(np.random.default_rng(0), 5, 8)


def coupling_round_trip_error(cases=500):
    """Worst |inverse(forward(x)) - x| and |forward(inverse(y)) - y| in float64,
    every weight random (std 0.3), 1-3 layers of 2-8 channels."""
    worst = 0.0
    for case in range(cases):
        rng = np.random.default_rng(case)
        channels = int(rng.choice([2, 4, 8]))
        stack = CouplingStack(rng, channels, 6, layers=int(rng.integers(1, 4)), scale=1.0)
        randomise(stack, rng, dtype=np.float64)
        x = Tensor(rng.standard_normal((1, channels, 4, 4)))
        worst = max(worst, float(np.abs(stack.inverse(stack(x)).data - x.data).max()))
        y = Tensor(rng.standard_normal((1, channels, 4, 4)))
        worst = max(worst, float(np.abs(stack(stack.inverse(y)).data - y.data).max()))
    return worst


def test_coupling_round_trip_500_cases():
    assert coupling_round_trip_error(500) < 1e-5


def test_coupling_round_trip_float32_at_init_scale():
    worst = 0.0
    for case in range(100):
        rng = np.random.default_rng(case)
        stack = CouplingStack(rng, 8, 8, layers=2)
        for layer in stack.layers:  # default init, random (instead of zero) output conv
            randomise(layer.net.layers[-1], rng, 0.1)
        x = Tensor(rng.standard_normal((1, 8, 6, 6)).astype(np.float32))
        worst = max(worst, float(np.abs(stack.inverse(stack(x)).data - x.data).max()))
    assert worst < 1e-5


def test_three_layer_eight_channel_round_trip():
    rng = np.random.default_rng(7)
    stack = CouplingStack(rng, 8, 8, layers=3)
    randomise(stack, rng, dtype=np.float64)
    x = Tensor(rng.standard_normal((2, 8, 6, 6)))
    assert np.abs(affine_coupling_inverse(affine_coupling_forward(x, stack), stack).data - x.data).max() < 1e-5


def test_logdet_matches_dense_jacobian():
    rng = np.random.default_rng(3)
    layer = AffineCoupling(rng, 4, 4)
    randomise(layer, rng)
    x0 = rng.standard_normal((1, 4, 2, 2))
    _, logdet = layer.forward_with_logdet(Tensor(x0))
    n = x0.size
    jac = np.zeros((n, n))
    for i in range(n):  # one reverse pass per output entry
        x = Tensor(x0.copy(), requires_grad=True)
        y = layer(x)
        seed = np.zeros(n)
        seed[i] = 1.0
        (g,) = backward(ops.sum(y * Tensor(seed.reshape(y.shape))), [x])
        jac[i] = g.ravel()
    sign, dense = np.linalg.slogdet(jac)
    assert sign > 0
    assert float(logdet.data[0]) == pytest.approx(dense, abs=1e-5)


# -- cosine correlation and the decoupling loss --------------------------------


def test_cosine_examples():
    a = Tensor(np.array([[1.0, 2.0, -3.0]]))
    assert cosine_correlation(a, a).item() == pytest.approx(1.0, abs=1e-6)
    e1, e2 = Tensor(np.array([[1.0, 0.0, 0.0]])), Tensor(np.array([[0.0, 1.0, 0.0]]))
    assert cosine_correlation(e1, e2).item() == 0.0
    v = cosine_correlation(Tensor(np.array([[1.0, 0.0]])), Tensor(np.array([[1.0, 1.0]]))).item()
    assert v == pytest.approx(0.70710678, abs=1e-6)
    assert cosine_correlation(Tensor(np.zeros((1, 3))), e1).item() == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_cosine_is_bounded(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((3, 2, 4, 4)), rng.standard_normal((3, 2, 4, 4)) * rng.uniform(0, 5)
    c = cosine_correlation(Tensor(a), Tensor(b)).data
    assert np.all(np.abs(c) <= 1.0)


def test_decoupling_loss_values():
    assert decoupling_loss(0.0, 1.0) == 0.0
    assert decoupling_loss(1.0, 1.0) == 1.0 / (1.0 + 1e-6)
    assert decoupling_loss(0.1, 0.0) == pytest.approx(1.0e4, rel=1e-12)
    assert DECOUPLE_DELTA == 1e-6


correlations = st.one_of(st.just(0.0), st.floats(1e-3, 1.0), st.floats(-1.0, -1e-3))


@settings(max_examples=200, deadline=None)
@given(correlations, correlations, st.floats(1e-3, 0.5))
def test_decoupling_loss_monotone(cl, cg, step):
    base = decoupling_loss(cl, cg)
    assert base >= 0
    assert (base == 0) == (cl == 0)
    assert decoupling_loss(np.copysign(abs(cl) + step, cl), cg) > base
    if cl != 0:
        assert decoupling_loss(cl, np.copysign(abs(cg) + step, cg)) < base


def test_decoupling_loss_on_tensors_matches_floats():
    cl, cg = np.array([0.3, -0.2]), np.array([0.5, 0.9])
    out = decoupling_loss(Tensor(cl), Tensor(cg)).data
    assert np.allclose(out, [decoupling_loss(a, b) for a, b in zip(cl, cg)])


# -- compensation -------------------------------------------------------------


@pytest.mark.parametrize("mode", ["full", "concat"])
def test_compensation_shapes(mode):
    rng = np.random.default_rng(0)
    net = ContextCompensation(rng, 6, mode)
    c0, orient = (Tensor(rng.standard_normal((2, 6, 16, 16)).astype(np.float32)) for _ in range(2))
    out, terms = compensate_context(net, c0, orient)
    assert out.shape == (2, 6, 16, 16)
    if mode == "concat":
        assert terms is None
    else:
        assert terms.g_oriented.shape == terms.g_propagated.shape
        assert terms.l_oriented.shape == terms.l_propagated.shape
        for v in (terms.cor_g.data, terms.cor_l.data):
            assert np.all(np.isfinite(v)) and np.all(np.abs(v) <= 1)


def test_compensation_shape_mismatch():
    net = ContextCompensation(np.random.default_rng(0), 4, "full")
    with pytest.raises(ShapeError):
        net(Tensor(np.zeros((1, 4, 8, 8))), Tensor(np.zeros((1, 4, 16, 16))))


def test_decoupling_gradient_wrt_extractor_weights():
    rng = np.random.default_rng(5)
    net = ContextCompensation(rng, 4, "full")
    randomise(net, rng, 0.2)
    c0 = Tensor(rng.standard_normal((1, 4, 8, 8)))
    orient = Tensor(rng.standard_normal((1, 4, 8, 8)))
    conv = net.mutual_extractor.layers[0]
    w0 = conv.weight

    def loss_of(w):
        conv.weight = w
        _, terms = net(c0, orient)
        return decoupling_loss(terms.cor_l, terms.cor_g)

    try:
        (err,) = check_gradients(loss_of, [w0.data.astype(np.float64)], step=1e-5)
    finally:
        conv.weight = w0
    assert err < 1e-3


def test_decoupling_training_direction():
    rng = np.random.default_rng(0)
    net = ContextCompensation(rng, 8, "full")
    randomise(net, rng, 0.1)
    batch = np.random.default_rng(1).standard_normal((2, 8, 16, 16)).astype(np.float32)
    c0, orient = Tensor(batch[:1]), Tensor(batch[1:])
    store = ParamStore.from_module(net)

    def loss():
        _, terms = net(c0, orient)
        return ops.mean(decoupling_loss(terms.cor_l, terms.cor_g))

    initial = loss().item()
    for _ in range(200):
        store.zero_grad()
        backward(loss())
        store.step(store.grads(), 1e-3)
    assert loss().item() < initial
