"""Window → image encoders.

Two complementary encodings per window:

* a 2x2 line-plot canvas — each channel drawn into its own quadrant with a
  fixed color (load red, vibration green, occupancy blue, duration black) on
  white, rendered by a deterministic software rasterizer (no plotting
  toolkit, so golden-image tests stay exact);
* a 3-channel texture image stacking recurrence plot, Markov transition
  field, and Gramian angular summation field of the load channel, computed on
  its piecewise-aggregate downsampling.

All encoders are pure functions; no global state, no RNG.
"""

from __future__ import annotations

import io as _io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DataError
from .io import atomic_write_bytes
from .signals import Window

# quadrant colors: load, vibration, occupancy, duration
CHANNEL_COLORS = (
    (1.0, 0.0, 0.0),
    (0.0, 1.0, 0.0),
    (0.0, 0.0, 1.0),
    (0.0, 0.0, 0.0),
)
QUADRANT_MARGIN_PX = 4


@dataclass(frozen=True)
class EncodingConfig:
    series_len_n: int = 224
    rp_epsilon_quantile: float = 0.10
    mtf_bins_q: int = 8
    image_size: int = 224

    def validate(self) -> "EncodingConfig":
        if self.series_len_n < 2:
            raise DataError("series_len_n must be >= 2")
        if not (0.0 < self.rp_epsilon_quantile <= 1.0):
            raise DataError("rp_epsilon_quantile must be in (0, 1]")
        if self.mtf_bins_q < 2:
            raise DataError("mtf_bins_q must be >= 2")
        if self.mtf_bins_q > self.series_len_n:
            raise DataError("mtf_bins_q must not exceed series_len_n")
        if self.series_len_n > self.image_size * 4:
            raise DataError("series_len_n must be <= 4x image_size")
        if self.image_size < 2 * (2 * QUADRANT_MARGIN_PX + 2) or self.image_size % 2:
            raise DataError("image_size must be even and large enough for quadrants")
        return self


@dataclass(frozen=True)
class ImageTensor:
    """H x W x 3 float image with every value finite and in [0, 1]."""

    values: np.ndarray

    def validate(self) -> "ImageTensor":
        v = self.values
        if v.ndim != 3 or v.shape[2] != 3:
            raise DataError("image must be H x W x 3")
        if not np.all(np.isfinite(v)):
            raise DataError("image contains non-finite values")
        if v.min() < 0.0 or v.max() > 1.0:
            raise DataError("image values must lie in [0, 1]")
        return self

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def to_uint8(self) -> np.ndarray:
        return np.floor(self.values * 255.0 + 0.5).astype(np.uint8)


@dataclass(frozen=True)
class TextureMatrices:
    rp: np.ndarray    # N x N in {0, 1}
    mtf: np.ndarray   # N x N in [0, 1]
    gasf: np.ndarray  # N x N in [-1, 1]


def paa_downsample(series: np.ndarray, target_n: int) -> np.ndarray:
    """Piecewise aggregate approximation: target_n segment means.

    Segments have length floor(len/target_n); the last one absorbs the
    remainder.
    """
    if target_n <= 0:
        raise DataError("target_n must be positive")
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < target_n:
        raise DataError(f"series length {n} shorter than target {target_n}")
    if n == target_n:
        return x.copy()
    seg = n // target_n
    starts = np.arange(target_n) * seg
    sums = np.add.reduceat(x, starts)
    counts = np.diff(np.append(starts, n))
    return sums / counts


def encode_rp(series: np.ndarray, epsilon: float) -> np.ndarray:
    """Recurrence plot: R[i,j] = 1 iff |x_i - x_j| <= epsilon.

    The boundary case is recurrent (in particular the diagonal is all ones).
    """
    x = np.asarray(series, dtype=float)
    if len(x) < 2:
        raise DataError("recurrence plot needs at least 2 samples")
    if epsilon < 0:
        raise DataError("epsilon must be >= 0")
    return (np.abs(x[:, None] - x[None, :]) <= epsilon).astype(float)


def rp_epsilon_from_quantile(series: np.ndarray, q: float) -> float:
    """q-quantile (lower nearest rank) of all pairwise absolute differences."""
    if not (0.0 < q <= 1.0):
        raise DataError("quantile must be in (0, 1]")
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 2:
        raise DataError("need at least 2 samples")
    iu = np.triu_indices(n, k=1)
    dists = np.sort(np.abs(x[:, None] - x[None, :])[iu])
    rank = int(np.ceil(q * len(dists)))  # 1-based nearest rank from below
    return float(dists[rank - 1])


def _quantile_bins(x: np.ndarray, q_bins: int) -> np.ndarray:
    """Equal-frequency bin index in [0, q_bins) for each sample (rank-based)."""
    edges = np.quantile(x, np.arange(1, q_bins) / q_bins)
    return np.searchsorted(edges, x, side="right")


def encode_mtf(series: np.ndarray, q_bins: int) -> np.ndarray:
    """Markov transition field.

    Samples are quantile-binned; P[k,l] is the empirical probability of the
    next sample lying in bin l given the current one is in bin k (rows never
    visited as a source default to uniform); M[i,j] = P[b_i, b_j].
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 2:
        raise DataError("MTF needs at least 2 samples")
    if q_bins < 2:
        raise DataError("q_bins must be >= 2")
    b = _quantile_bins(x, q_bins)
    counts = np.zeros((q_bins, q_bins))
    np.add.at(counts, (b[:-1], b[1:]), 1.0)
    visits = counts.sum(axis=1, keepdims=True)
    p = np.where(visits > 0, counts / np.where(visits > 0, visits, 1.0), 1.0 / q_bins)
    return p[b[:, None], b[None, :]]


def encode_gasf(series: np.ndarray) -> np.ndarray:
    """Gramian angular summation field of the min-max rescaled series.

    With phi = arccos of the rescaled value, G[i,j] = cos(phi_i + phi_j),
    evaluated through the algebraic identity
    x_i x_j - sqrt(1 - x_i^2) sqrt(1 - x_j^2) so that anchor values (-1, 0, 1)
    come out exact. A constant series rescales to all zeros.
    """
    x = np.asarray(series, dtype=float)
    if len(x) < 2:
        raise DataError("GASF needs at least 2 samples")
    lo, hi = x.min(), x.max()
    if hi > lo:
        scaled = np.clip((2.0 * (x - lo) - (hi - lo)) / (hi - lo), -1.0, 1.0)
    else:
        scaled = np.zeros_like(x)
    comp = np.sqrt(1.0 - scaled * scaled)
    return np.outer(scaled, scaled) - np.outer(comp, comp)


def bilinear_resize(channel: np.ndarray, out_size: int) -> np.ndarray:
    """Separable bilinear resample with corner-aligned sample grids.

    Identity when the sizes already match.
    """
    n = channel.shape[0]
    if channel.shape != (n, n):
        raise DataError("bilinear_resize expects a square matrix")
    if n == out_size:
        return channel.copy()
    pos = np.arange(out_size) * ((n - 1) / (out_size - 1))
    i0 = np.minimum(pos.astype(int), n - 2)
    frac = pos - i0
    rows = channel[i0, :] * (1.0 - frac)[:, None] + channel[i0 + 1, :] * frac[:, None]
    return rows[:, i0] * (1.0 - frac)[None, :] + rows[:, i0 + 1] * frac[None, :]


def stack_texture_image(tm: TextureMatrices, image_size: int) -> ImageTensor:
    """RP, MTF, (GASF+1)/2 as channels 0..2, each bilinearly resized."""
    n = tm.rp.shape[0]
    if tm.mtf.shape != (n, n) or tm.gasf.shape != (n, n):
        raise DataError("texture matrices must share one size")
    chans = [
        bilinear_resize(tm.rp, image_size),
        bilinear_resize(tm.mtf, image_size),
        bilinear_resize((tm.gasf + 1.0) / 2.0, image_size),
    ]
    stacked = np.clip(np.stack(chans, axis=-1), 0.0, 1.0)
    return ImageTensor(values=stacked.astype(np.float32)).validate()


# ---------------------------------------------------------------------------
# line-plot rasterizer


def _column_spans(y: np.ndarray, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Vertical extent of the polyline within each of `width` columns.

    Samples map to columns with endpoints pinned to the first/last column.
    Each column's span covers the min/max of its own samples plus the value
    interpolated at the column position (which also fills columns that own no
    sample), and adjacent spans are bridged at midpoints so the drawn curve
    is connected, like a 1-px polyline.
    """
    n = len(y)
    u = np.arange(n) * ((width - 1) / (n - 1)) if n > 1 else np.zeros(1)
    cols = np.floor(u + 0.5).astype(int)

    lo = np.full(width, np.inf)
    hi = np.full(width, -np.inf)
    np.minimum.at(lo, cols, y)
    np.maximum.at(hi, cols, y)

    at_col = np.interp(np.arange(width), u, y)
    lo = np.minimum(lo, at_col)
    hi = np.maximum(hi, at_col)

    # first/last sample value inside each column, for midpoint bridging
    first = np.full(width, np.nan)
    last = np.full(width, np.nan)
    first[cols[::-1]] = y[::-1]
    last[cols] = y
    first = np.where(np.isnan(first), at_col, first)
    last = np.where(np.isnan(last), at_col, last)
    mid = 0.5 * (last[:-1] + first[1:])
    lo[:-1] = np.minimum(lo[:-1], mid)
    hi[:-1] = np.maximum(hi[:-1], mid)
    lo[1:] = np.minimum(lo[1:], mid)
    hi[1:] = np.maximum(hi[1:], mid)
    return lo, hi


def _paint_polyline(canvas: np.ndarray, row0: int, col0: int, height: int,
                    width: int, v: np.ndarray,
                    color: tuple[float, float, float]) -> None:
    """Paint a polyline whose values v are already scaled to [0, height-1].

    The value axis points up: larger v lands on a smaller row index.
    """
    span_lo, span_hi = _column_spans(v, width)
    r_top = np.floor((height - 1) - span_hi + 0.5).astype(int)
    r_bot = np.floor((height - 1) - span_lo + 0.5).astype(int)
    r_top = np.clip(r_top, 0, height - 1)
    r_bot = np.clip(r_bot, 0, height - 1)
    rgb = np.array(color)
    for c in range(width):
        canvas[row0 + r_top[c] : row0 + r_bot[c] + 1, col0 + c] = rgb


def _scale_min_max(y: np.ndarray, height: int) -> np.ndarray:
    """Min-max scale to [0, height-1]; a constant series sits at mid-height."""
    lo, hi = y.min(), y.max()
    if hi > lo:
        return (y - lo) / (hi - lo) * (height - 1)
    return np.full_like(y, (height - 1) / 2.0)


def _draw_channel(canvas: np.ndarray, series: np.ndarray, row0: int, col0: int,
                  quad: int, color: tuple[float, float, float]) -> None:
    """Rasterize one channel into the quad x quad region at (row0, col0)."""
    m = QUADRANT_MARGIN_PX
    side = quad - 2 * m
    y = np.asarray(series, dtype=float)
    _paint_polyline(canvas, row0 + m, col0 + m, side, side, _scale_min_max(y, side), color)


def encode_line_plot(window: Window, image_size: int) -> ImageTensor:
    """Render the four channels into 2x2 quadrants of a white RGB canvas."""
    if window.channels.shape[0] != 4:
        raise DataError("line plot expects exactly four channels")
    if image_size % 2 or image_size < 2 * (2 * QUADRANT_MARGIN_PX + 2):
        raise DataError("image_size must be even and large enough for quadrants")
    quad = image_size // 2
    canvas = np.ones((image_size, image_size, 3))
    origins = ((0, 0), (0, quad), (quad, 0), (quad, quad))
    for ch in range(4):
        row0, col0 = origins[ch]
        _draw_channel(canvas, window.channels[ch], row0, col0, quad, CHANNEL_COLORS[ch])
    return ImageTensor(values=canvas.astype(np.float32)).validate()


def encode_texture(load: np.ndarray, config: EncodingConfig) -> ImageTensor:
    """RP/MTF/GASF stack of the PAA-downsampled load channel."""
    config.validate()
    series = paa_downsample(load, config.series_len_n)
    eps = rp_epsilon_from_quantile(series, config.rp_epsilon_quantile)
    tm = TextureMatrices(
        rp=encode_rp(series, eps),
        mtf=encode_mtf(series, config.mtf_bins_q),
        gasf=encode_gasf(series),
    )
    return stack_texture_image(tm, config.image_size)


def encode_window_pair(window: Window, config: EncodingConfig) -> tuple[ImageTensor, ImageTensor]:
    """(line plot, texture) pair for one window.

    The line plot is drawn from the raw-resolution channels so short-lived
    vibration structure survives; textures are computed on the downsampled
    load series.
    """
    line = encode_line_plot(window, config.image_size)
    texture = encode_texture(window.load, config)
    return line, texture


TRACE_WIDTH = 960
TRACE_HEIGHT = 320
TRACE_MARGIN_PX = 8
TRACE_DASH_ON = 6
TRACE_DASH_PERIOD = 12


def render_trace_image(
    times: np.ndarray,
    load: np.ndarray,
    prob_times: np.ndarray,
    probs: np.ndarray,
    threshold: float = 0.5,
) -> ImageTensor:
    """Load (black, min-max scale), probability (green, fixed [0,1] scale),
    and a dashed red threshold line on one white canvas sharing the time axis.
    """
    h = TRACE_HEIGHT - 2 * TRACE_MARGIN_PX
    w = TRACE_WIDTH - 2 * TRACE_MARGIN_PX
    m = TRACE_MARGIN_PX
    canvas = np.ones((TRACE_HEIGHT, TRACE_WIDTH, 3))
    t_max = float(times[-1])

    _paint_polyline(canvas, m, m, h, w, _scale_min_max(np.asarray(load, float), h),
                    (0.0, 0.0, 0.0))

    thr_row = int(np.floor((h - 1) - threshold * (h - 1) + 0.5)) + m
    for c0 in range(0, w, TRACE_DASH_PERIOD):
        canvas[thr_row, m + c0 : m + min(c0 + TRACE_DASH_ON, w)] = (1.0, 0.0, 0.0)

    if len(probs) > 0:
        pt = np.asarray(prob_times, dtype=float)
        c_lo = int(np.floor(pt[0] / t_max * (w - 1) + 0.5))
        c_hi = int(np.floor(pt[-1] / t_max * (w - 1) + 0.5))
        sub_w = max(1, c_hi - c_lo + 1)
        v = np.asarray(probs, dtype=float) * (h - 1)
        _paint_polyline(canvas, m, m + c_lo, h, sub_w, v, (0.0, 0.6, 0.0))

    return ImageTensor(values=canvas.astype(np.float32)).validate()


def save_png(path, image: ImageTensor) -> None:
    """Write an 8-bit RGB PNG atomically."""
    buf = _io.BytesIO()
    Image.fromarray(image.to_uint8(), mode="RGB").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())
