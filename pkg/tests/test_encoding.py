import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from anchordet.encoding import (
    AnchorEncoderMLP,
    SineEncoderConfig,
    encode_anchor_queries,
    frequencies,
    g_1d,
    g_sin_2d,
)
from anchordet.tensor import Tensor, grad_check


def axis_oracle(coord, channels, temperature=10000.0, scale=2 * math.pi):
    out = []
    for ch in range(channels):
        i = ch // 2
        phase = scale * coord / temperature ** (2 * i / channels)
        out.append(math.sin(phase) if ch % 2 == 0 else math.cos(phase))
    return np.array(out)


def test_config_validation():
    with pytest.raises(ValueError):
        SineEncoderConfig(7)
    with pytest.raises(ValueError):
        SineEncoderConfig(0)
    with pytest.raises(ValueError):
        SineEncoderConfig(8, temperature=0.0)
    with pytest.raises(ValueError):
        g_sin_2d(np.zeros((1, 2)), SineEncoderConfig(6))


def test_frequencies_pair_up():
    f = frequencies(8, 10000.0)
    np.testing.assert_allclose(f, [1, 1, 10, 10, 100, 100, 1000, 1000])


def test_g_sin_2d_origin_alternates():
    out = g_sin_2d(np.zeros((1, 2)), SineEncoderConfig(16)).data[0]
    np.testing.assert_array_equal(out, np.tile([0.0, 1.0], 8))


def test_g_sin_2d_deterministic():
    pos = np.random.default_rng(0).uniform(size=(5, 2))
    cfg = SineEncoderConfig(32)
    assert g_sin_2d(pos, cfg).data.tobytes() == g_sin_2d(pos, cfg).data.tobytes()


def test_g_sin_2d_formula_oracle():
    out = g_sin_2d(np.array([[0.5, 0.25]]), SineEncoderConfig(8)).data[0]
    ref = np.concatenate([axis_oracle(0.5, 4), axis_oracle(0.25, 4)])
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-12)


def test_g_1d_origin_alternates():
    np.testing.assert_array_equal(g_1d(np.array([0.0]), SineEncoderConfig(6)).data.reshape(-1),
                                  [0, 1, 0, 1, 0, 1])


def test_g_1d_formula_oracle():
    out = g_1d(np.array([0.7]), SineEncoderConfig(6)).data.reshape(-1)
    np.testing.assert_allclose(out, axis_oracle(0.7, 6), rtol=0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.sampled_from([2, 4, 8, 32]))
def test_g_1d_matches_x_half_of_2d(x, c):
    one = g_1d(np.array([[x]]), SineEncoderConfig(c)).data[0]
    two = g_sin_2d(np.array([[x, 0.3]]), SineEncoderConfig(2 * c)).data[0, :c]
    np.testing.assert_array_equal(one, two)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.just(2)), elements=st.floats(0, 1)),
       st.randoms(use_true_random=False))
def test_rows_are_independent_and_bounded(pos, rnd):
    cfg = SineEncoderConfig(16)
    perm = list(range(len(pos)))
    rnd.shuffle(perm)
    out = g_sin_2d(pos, cfg).data
    np.testing.assert_array_equal(g_sin_2d(pos[perm], cfg).data, out[perm])
    assert np.abs(out).max() <= 1.0
    assert np.abs(g_1d(pos[:, :1], cfg).data).max() <= 1.0


def test_zero_mlp_outputs_zero():
    mlp = AnchorEncoderMLP(8, np.random.default_rng(0), np.float64)
    for p in mlp.parameters():
        p.data[...] = 0.0
    out = encode_anchor_queries(np.random.default_rng(1).uniform(size=(4, 2)), mlp, SineEncoderConfig(8))
    np.testing.assert_array_equal(out.data, np.zeros((4, 8)))


def test_identity_mlp_returns_encoding():
    cfg = SineEncoderConfig(8)
    mlp = AnchorEncoderMLP(8, np.random.default_rng(0), np.float64, activation="identity")
    for lin in (mlp.layer1, mlp.layer2):
        lin.weight.data = np.eye(8)
        lin.bias.data[...] = 0.0
    pos = np.random.default_rng(2).uniform(size=(3, 2))
    np.testing.assert_array_equal(encode_anchor_queries(pos, mlp, cfg).data, g_sin_2d(pos, cfg).data)


def test_mlp_composition_oracle():
    cfg = SineEncoderConfig(8)
    mlp = AnchorEncoderMLP(8, np.random.default_rng(3), np.float64)
    for lin in (mlp.layer1, mlp.layer2):
        lin.bias.data = np.random.default_rng(4).normal(size=8)
    e = np.concatenate([axis_oracle(0.5, 4), axis_oracle(0.5, 4)])
    w1, b1 = mlp.layer1.weight.data, mlp.layer1.bias.data
    w2, b2 = mlp.layer2.weight.data, mlp.layer2.bias.data
    hidden = np.maximum(w1 @ e + b1, 0.0)
    ref = w2 @ hidden + b2
    out = encode_anchor_queries(np.array([[0.5, 0.5]]), mlp, cfg).data[0]
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-12)


def test_gradient_reaches_anchor_coordinates():
    cfg = SineEncoderConfig(8)
    mlp = AnchorEncoderMLP(8, np.random.default_rng(5), np.float64)
    pos = Tensor(np.random.default_rng(6).uniform(size=(3, 2)))
    assert grad_check(lambda p: encode_anchor_queries(p, mlp, cfg).sum(), pos) < 1e-4


def test_gradient_of_1d_encoding():
    cfg = SineEncoderConfig(6)
    pos = Tensor(np.random.default_rng(7).uniform(size=(4, 1)))
    w = np.random.default_rng(8).normal(size=(4, 6))
    assert grad_check(lambda p: (g_1d(p, cfg) * Tensor(w)).sum(), pos) < 1e-4
