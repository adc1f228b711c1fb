import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from ctxcodec.codec import (
    LATENT_MAX,
    PROB_MIN,
    RangeCoderError,
    cdf_tables,
    decode_latent,
    encode_latent,
    entropy_bits,
    likelihood,
    quantize,
    range_decode,
    range_encode,
)
from ctxcodec.codec.entropy import bits_per_entry, saturation_count
from ctxcodec.codec.rangecoder import TOTAL
from ctxcodec.numerics import Tensor, backward, ops
from ctxcodec.numerics.gradcheck import check_gradients


def random_cdf(rng, k):
    freq = rng.integers(1, 1000, size=k).astype(np.float64)
    freq = np.maximum(1, np.floor(freq / freq.sum() * (TOTAL - k))).astype(np.int64)
    freq[np.argmax(freq)] += TOTAL - freq.sum()
    return np.concatenate([[0], np.cumsum(freq)])


def ideal_bits(symbols, cdfs):
    freq = np.diff(cdfs, axis=-1)
    p = freq[np.arange(len(symbols)), symbols] / TOTAL
    return float(-np.log2(p).sum())


# -- quantisation -------------------------------------------------------------


def test_rounding_convention():
    y = Tensor(np.array([0.4, 0.5, -0.5, -0.4, 1.5, -2.5], dtype=np.float32))
    assert quantize(y).data.tolist() == [0.0, 1.0, -1.0, 0.0, 2.0, -3.0]


def test_integers_unchanged():
    y = np.arange(-10, 11, dtype=np.float32)
    assert np.array_equal(quantize(Tensor(y)).data, y)


def test_clamp_and_saturation_count():
    y = np.array([63.4, 64.6, -70.0, 3.0], dtype=np.float32)
    assert quantize(Tensor(y)).data.tolist() == [63.0, 64.0, -64.0, 3.0]
    assert saturation_count(y) == 2


def test_straight_through_gradient_is_ones():
    y = Tensor(np.random.default_rng(0).normal(size=(2, 3, 4)).astype(np.float32), requires_grad=True)
    backward(ops.sum(quantize(y, "train")))
    assert np.array_equal(y.grad, np.ones_like(y.data))


def test_unknown_mode():
    with pytest.raises(ValueError):
        quantize(Tensor(np.zeros(2)), "soft")


# -- rate model ---------------------------------------------------------------


def test_concentrated_gaussian_costs_nothing():
    y = np.arange(-5, 6, dtype=np.float32)
    bits = bits_per_entry(y, y, np.full_like(y, 0.04))
    assert np.all(bits >= 0) and np.all(bits < 1e-6)


def test_bits_capped_by_probability_floor():
    bits = bits_per_entry(np.array([64.0]), np.array([-64.0]), np.array([0.04]))
    assert bits[0] == pytest.approx(16.0)
    assert PROB_MIN == 2.0 ** -16


@pytest.mark.parametrize("sigma", [5.0, 20.0, 50.0])
@pytest.mark.parametrize("k", [0, 3, -7])
def test_wide_gaussian_matches_numeric_integration(sigma, k):
    mass, _ = integrate.quad(lambda u: math.exp(-u * u / (2 * sigma * sigma)) / (sigma * math.sqrt(2 * math.pi)),
                             k - 0.5, k + 0.5, epsabs=1e-14)
    p = likelihood(Tensor(np.array([float(k)])), Tensor(np.zeros(1)), Tensor(np.array([sigma]))).data[0]
    assert p == pytest.approx(mass, rel=1e-6)
    if sigma >= 20:
        # bin width times the density at the bin centre
        assert p == pytest.approx(math.exp(-k * k / (2 * sigma * sigma)) / (sigma * math.sqrt(2 * math.pi)),
                                  rel=1e-3)


def test_far_tail_is_symmetric():
    # mirrored evaluation keeps both tails identical
    mu, s = np.zeros(1), np.ones(1)
    assert bits_per_entry(np.array([6.0]), mu, s)[0] == bits_per_entry(np.array([-6.0]), mu, s)[0]


def test_tensor_and_array_paths_agree():
    rng = np.random.default_rng(3)
    y = np.round(rng.normal(0, 3, 200)).astype(np.float64)
    mu, s = rng.normal(0, 2, 200), rng.uniform(0.04, 5, 200)
    t = entropy_bits(Tensor(y), Tensor(mu), Tensor(s)).item()
    assert t == pytest.approx(entropy_bits(y, mu, s), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 99))
def test_entropy_additive_over_splits(seed, cut):
    rng = np.random.default_rng(seed)
    y = np.round(rng.normal(0, 4, 100))
    mu, s = rng.normal(0, 2, 100), rng.uniform(0.04, 6, 100)
    whole = entropy_bits(y, mu, s)
    parts = entropy_bits(y[:cut], mu[:cut], s[:cut]) + entropy_bits(y[cut:], mu[cut:], s[cut:])
    assert parts == pytest.approx(whole, rel=1e-12)


def test_rate_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    y = np.round(rng.normal(0, 2, (1, 4, 6, 6)))
    mu = rng.normal(0, 2, y.shape)
    s = rng.uniform(0.5, 3, y.shape)

    def rate(m, sc):
        return entropy_bits(Tensor(y), m, sc)

    assert max(check_gradients(rate, [mu, s], seed=0)) < 1e-3


# -- CDF tables ----------------------------------------------------------------


@settings(max_examples=100, deadline=None)
@given(st.floats(-80, 80), st.floats(0.04, 100))
def test_cdf_tables_are_valid(mu, sigma):
    cdf = cdf_tables(np.array([mu]), np.array([sigma]))[0]
    assert cdf.shape == (2 * LATENT_MAX + 2,)
    assert cdf[0] == 0 and cdf[-1] == TOTAL
    assert np.all(np.diff(cdf) >= 1)


def test_cdf_tables_deterministic():
    rng = np.random.default_rng(1)
    mu, s = rng.normal(0, 3, 50), rng.uniform(0.04, 9, 50)
    assert np.array_equal(cdf_tables(mu, s), cdf_tables(mu.copy(), s.copy()))


# -- range coder -------------------------------------------------------------


def test_empty_round_trip():
    table = random_cdf(np.random.default_rng(0), 4)
    assert range_encode([], table) == b""
    assert range_decode(b"", table, count=0).size == 0


def test_thousand_fair_bits():
    rng = np.random.default_rng(0)
    symbols = rng.integers(0, 2, 1000)
    table = np.array([0, TOTAL // 2, TOTAL])
    data = range_encode(symbols, table)
    assert 125 <= len(data) <= 135
    assert np.array_equal(range_decode(data, table, count=1000), symbols)


@pytest.mark.parametrize("seed", range(500))
def test_round_trip_random_tables(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(1, 300)), int(rng.integers(2, 40))
    cdfs = np.stack([random_cdf(rng, k) for _ in range(n)])
    freq = np.diff(cdfs, axis=1)
    symbols = np.array([rng.choice(k, p=f / TOTAL) for f in freq])
    data = range_encode(symbols, cdfs)
    assert np.array_equal(range_decode(data, cdfs), symbols)
    assert len(data) <= ideal_bits(symbols, cdfs) / 8 + 32


def test_symbol_outside_support():
    with pytest.raises(RangeCoderError, match="outside support"):
        range_encode([0, 3], np.array([0, 100, TOTAL]))


def test_truncated_payload():
    rng = np.random.default_rng(2)
    table = random_cdf(rng, 8)
    symbols = rng.integers(0, 8, 400)
    data = range_encode(symbols, table)
    with pytest.raises(RangeCoderError, match="truncated"):
        range_decode(data[:-3], table, count=400)


def test_trailing_bytes_rejected():
    table = np.array([0, TOTAL // 2, TOTAL])
    data = range_encode([1, 0, 1], table)
    with pytest.raises(RangeCoderError, match="unread"):
        range_decode(data + b"\x00", table, count=3)


def test_invalid_table_rejected():
    with pytest.raises(RangeCoderError):
        range_encode([0], np.array([0, 0, TOTAL]))


# -- latent planes -----------------------------------------------------------


@pytest.mark.parametrize("seed", range(20))
def test_latent_round_trip_and_overhead(seed):
    rng = np.random.default_rng(seed)
    channels = 4
    shape = (1, channels, 4, 4)
    mu = rng.normal(0, 3, shape)
    s = np.exp(rng.uniform(np.log(0.04), np.log(20), shape))
    y = np.clip(np.round(rng.normal(mu, s)), -LATENT_MAX, LATENT_MAX).astype(np.float32)
    data = encode_latent(y, mu, s)
    assert np.array_equal(decode_latent(data, mu, s), y)
    est = entropy_bits(y, mu, s)
    assert len(data) * 8 <= est + 2 * 8 * channels
    assert len(data) * 8 >= est - 1
