"""Encoder tests: closed-form fixtures plus brute-force O(N^2) references."""

import numpy as np
import pytest

from bedexit.errors import DataError
from bedexit.imaging import (
    EncodingConfig,
    ImageTensor,
    TextureMatrices,
    bilinear_resize,
    encode_gasf,
    encode_line_plot,
    encode_mtf,
    encode_rp,
    encode_texture,
    encode_window_pair,
    paa_downsample,
    rp_epsilon_from_quantile,
    stack_texture_image,
)
from bedexit.signals import Window


# --------------------------------------------------------------- references


def rp_reference(x, eps):
    n = len(x)
    r = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            r[i, j] = 1.0 if abs(x[i] - x[j]) <= eps else 0.0
    return r


def mtf_reference(x, q):
    """Transition-counting oracle built with explicit loops."""
    n = len(x)
    edges = np.quantile(x, np.arange(1, q) / q)
    b = np.searchsorted(edges, x, side="right")
    counts = np.zeros((q, q))
    for t in range(n - 1):
        counts[b[t], b[t + 1]] += 1.0
    p = np.zeros((q, q))
    for k in range(q):
        total = counts[k].sum()
        p[k] = counts[k] / total if total > 0 else 1.0 / q
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            m[i, j] = p[b[i], b[j]]
    return m


def gasf_reference(x):
    lo, hi = x.min(), x.max()
    scaled = (2.0 * (x - lo) - (hi - lo)) / (hi - lo) if hi > lo else np.zeros_like(x)
    scaled = np.clip(scaled, -1.0, 1.0)
    phi = np.arccos(scaled)
    n = len(x)
    g = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            g[i, j] = np.cos(phi[i] + phi[j])
    return g


# ----------------------------------------------------------------------- PAA


def test_paa_fixture():
    assert np.array_equal(paa_downsample([1.0, 1.0, 2.0, 2.0], 2), [1.0, 2.0])


def test_paa_constant():
    out = paa_downsample(np.full(1000, 3.5), 7)
    assert np.allclose(out, 3.5)
    assert len(out) == 7


def test_paa_matches_segment_mean_loop(rng):
    x = rng.normal(size=27001)
    target = 224
    out = paa_downsample(x, target)
    seg = len(x) // target
    for k in range(target):
        hi = (k + 1) * seg if k < target - 1 else len(x)
        assert out[k] == pytest.approx(x[k * seg : hi].mean(), abs=1e-12)


def test_paa_identity_when_equal_length(rng):
    x = rng.normal(size=16)
    assert np.array_equal(paa_downsample(x, 16), x)


def test_paa_rejects_bad_target(rng):
    with pytest.raises(DataError):
        paa_downsample(rng.normal(size=4), 0)
    with pytest.raises(DataError):
        paa_downsample(rng.normal(size=4), 5)


# ------------------------------------------------------------------------ RP


def test_rp_fixture():
    out = encode_rp(np.array([0.0, 1.0, 0.1]), 0.2)
    assert np.array_equal(out, [[1, 0, 1], [0, 1, 0], [1, 0, 1]])


def test_rp_constant_all_ones():
    assert np.array_equal(encode_rp(np.full(5, 2.0), 0.0), np.ones((5, 5)))


def test_rp_boundary_is_recurrent():
    # |x_i - x_j| == eps counts as recurrent
    out = encode_rp(np.array([0.0, 0.2]), 0.2)
    assert np.array_equal(out, np.ones((2, 2)))


def test_rp_matches_bruteforce(rng):
    x = rng.normal(size=64)
    eps = rp_epsilon_from_quantile(x, 0.10)
    assert np.array_equal(encode_rp(x, eps), rp_reference(x, eps))


def test_rp_quantile_fixtures():
    assert rp_epsilon_from_quantile(np.array([0.0, 1.0]), 1.0) == 1.0
    assert rp_epsilon_from_quantile(np.full(9, 4.2), 0.3) == 0.0


def test_rp_quantile_matches_sorted_pairs(rng):
    x = rng.normal(size=32)
    dists = sorted(abs(x[i] - x[j]) for i in range(32) for j in range(i + 1, 32))
    rank = int(np.ceil(0.10 * len(dists)))
    assert rp_epsilon_from_quantile(x, 0.10) == dists[rank - 1]


def test_rp_affine_invariant_with_quantile_epsilon(rng):
    x = rng.normal(size=48)
    y = 3.7 * x + 11.0
    rx = encode_rp(x, rp_epsilon_from_quantile(x, 0.10))
    ry = encode_rp(y, rp_epsilon_from_quantile(y, 0.10))
    assert np.array_equal(rx, ry)


# ----------------------------------------------------------------------- MTF


def test_mtf_checkerboard_fixture():
    out = encode_mtf(np.array([0.0, 1.0, 0.0, 1.0]), 2)
    expect = [[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0]]
    assert np.array_equal(out, expect)


def test_mtf_constant_uniform():
    out = encode_mtf(np.full(6, 1.0), 2)
    assert np.all(out == out[0, 0])


def test_mtf_matches_bruteforce_and_row_stochastic(rng):
    x = rng.normal(size=64)
    q = 8
    out = encode_mtf(x, q)
    assert np.allclose(out, mtf_reference(x, q), atol=1e-12)
    # recover P row sums through the reference construction
    edges = np.quantile(x, np.arange(1, q) / q)
    b = np.searchsorted(edges, x, side="right")
    counts = np.zeros((q, q))
    for t in range(63):
        counts[b[t], b[t + 1]] += 1.0
    for k in range(q):
        total = counts[k].sum()
        row = counts[k] / total if total else np.full(q, 1.0 / q)
        assert row.sum() == pytest.approx(1.0, abs=1e-12)


def test_mtf_monotone_transform_invariant(rng):
    x = rng.normal(size=40)
    assert np.allclose(encode_mtf(x, 8), encode_mtf(np.exp(x), 8), atol=1e-12)


# ---------------------------------------------------------------------- GASF


def test_gasf_fixture():
    # rescaled form [1, 0, -1] -> phis {0, pi/2, pi}
    out = encode_gasf(np.array([2.0, 1.0, 0.0]))
    assert np.allclose(out, [[1, 0, -1], [0, -1, 0], [-1, 0, 1]], atol=1e-12)


def test_gasf_constant_all_minus_one():
    assert np.allclose(encode_gasf(np.full(4, 9.9)), -1.0, atol=1e-12)


def test_gasf_matches_double_loop_and_identity(rng):
    x = rng.normal(size=64)
    out = encode_gasf(x)
    assert np.abs(out - gasf_reference(x)).max() < 1e-9
    # diagonal identity G[i,i] = 2 xtilde_i^2 - 1
    lo, hi = x.min(), x.max()
    scaled = (2.0 * (x - lo) - (hi - lo)) / (hi - lo)
    assert np.allclose(np.diag(out), 2.0 * scaled**2 - 1.0, atol=1e-9)
    assert np.allclose(out, out.T, atol=0)


def test_gasf_affine_invariant(rng):
    x = rng.normal(size=24)
    assert np.allclose(encode_gasf(x), encode_gasf(0.5 * x + 100.0), atol=1e-12)


# ---------------------------------------------------- resize + texture stack


def test_bilinear_identity(rng):
    m = rng.random((17, 17))
    assert np.array_equal(bilinear_resize(m, 17), m)


def test_bilinear_matches_separable_oracle(rng):
    m = rng.random((64, 64))
    out = bilinear_resize(m, 224)
    # independent oracle: interpolate rows then columns with np.interp
    pos = np.arange(224) * (63 / 223)
    rows = np.stack([np.interp(pos, np.arange(64), m[i]) for i in range(64)])
    expect = np.stack([np.interp(pos, np.arange(64), rows[:, j]) for j in range(224)], axis=1)
    assert np.abs(out - expect).max() < 1e-6


def test_stack_texture_channels(rng):
    n = 32
    rp = np.ones((n, n))
    mtf = rng.random((n, n))
    gasf = np.zeros((n, n))
    img = stack_texture_image(TextureMatrices(rp=rp, mtf=mtf, gasf=gasf), n)
    assert img.values.shape == (n, n, 3)
    assert np.all(img.values[:, :, 0] == 1.0)
    assert np.allclose(img.values[:, :, 1], mtf, atol=1e-6)
    assert np.allclose(img.values[:, :, 2], 0.5, atol=1e-6)


def test_stack_texture_constant_series_channel2_zero():
    g = encode_gasf(np.full(16, 3.0))
    img = stack_texture_image(
        TextureMatrices(rp=np.ones((16, 16)), mtf=np.full((16, 16), 0.5), gasf=g), 16
    )
    assert np.all(img.values[:, :, 2] == 0.0)


def test_encode_texture_values_bounded(rng):
    cfg = EncodingConfig(series_len_n=64, image_size=32)
    img = encode_texture(rng.normal(size=500) ** 2, cfg)
    img.validate()
    assert img.values.dtype == np.float32


# ------------------------------------------------------------ line rasterizer


def make_window(channels, fs=25.0):
    return Window(channels=np.asarray(channels, dtype=float), t_end=1.0, sample_rate_hz=fs)


def test_line_plot_dimensions():
    w = make_window(np.tile(np.linspace(0, 1, 100), (4, 1)))
    img = encode_line_plot(w, 224)
    assert img.values.shape == (224, 224, 3)


def test_line_plot_constant_window_single_rows():
    """Each quadrant of an all-constant window is one colored row, rest white."""
    w = make_window(np.full((4, 50), 7.0))
    img = encode_line_plot(w, 64).values
    quad, m = 32, 4
    mid_row = int(np.floor((quad - 2 * m - 1) / 2.0 + 0.5)) + m
    origins = ((0, 0), (0, quad), (quad, 0), (quad, quad))
    colors = ((1, 0, 0), (0, 1, 0), (0, 0, 1), (0, 0, 0))
    for (r0, c0), color in zip(origins, colors):
        block = img[r0 : r0 + quad, c0 : c0 + quad]
        painted = np.argwhere(np.any(block != 1.0, axis=2))
        assert set(painted[:, 0]) == {mid_row}
        assert np.all(block[mid_row, m : quad - m] == color)


def test_line_plot_ramp_monotone_path():
    """A 0..1 ramp in channel 0 walks from quadrant bottom-left to top-right."""
    ch = np.zeros((4, 64))
    ch[0] = np.linspace(0.0, 1.0, 64)
    img = encode_line_plot(make_window(ch), 64).values
    quad, m = 32, 4
    block = img[:quad, :quad]
    red = np.argwhere(np.all(block == (1, 0, 0), axis=2))
    cols = np.unique(red[:, 1])
    assert cols.min() == m and cols.max() == quad - m - 1
    # downward row trend left to right (value axis points up)
    tops = [red[red[:, 1] == c][:, 0].min() for c in cols]
    bots = [red[red[:, 1] == c][:, 0].max() for c in cols]
    assert bots[0] == quad - m - 1  # starts at quadrant bottom
    assert all(a >= b for a, b in zip(tops, tops[1:]))
    assert all(a >= b for a, b in zip(bots, bots[1:]))
    assert tops[-1] == m  # ends at quadrant top


def test_line_plot_deterministic(rng):
    ch = rng.normal(size=(4, 300))
    a = encode_line_plot(make_window(ch), 64).values
    b = encode_line_plot(make_window(ch.copy()), 64).values
    assert np.array_equal(a, b)


def test_encode_window_pair_shapes(rng):
    cfg = EncodingConfig(series_len_n=64, image_size=32)
    ch = np.abs(rng.normal(size=(4, 400)))
    line, texture = encode_window_pair(make_window(ch), cfg)
    assert line.values.shape == (32, 32, 3)
    assert texture.values.shape == (32, 32, 3)


def test_image_tensor_uint8_rounding():
    img = ImageTensor(values=np.array([[[0.0, 0.5, 1.0]]], dtype=np.float32))
    assert np.array_equal(img.to_uint8(), [[[0, 128, 255]]])


def test_encoding_config_validation():
    with pytest.raises(DataError):
        EncodingConfig(series_len_n=1).validate()
    with pytest.raises(DataError):
        EncodingConfig(rp_epsilon_quantile=0.0).validate()
    with pytest.raises(DataError):
        EncodingConfig(mtf_bins_q=300, series_len_n=224).validate()
    with pytest.raises(DataError):
        EncodingConfig(image_size=21).validate()
    EncodingConfig().validate()
