"""Scattered taxel measurements to dense single-channel tactile images.

A planar sensor layout is resampled onto a regular grid by normalized
truncated-Gaussian kernel splatting: each pixel value is the convex
combination of nearby taxel values weighted by exp(-d^2 / (2 sigma^2)),
restricted to taxels within ``cutoff_sigmas * sigma``. Pixels with no
taxel in range are exactly 0.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import formats
from .errors import ConfigError, DataError

RAW_MAX = 65535.0  # 16-bit acquisition ceiling
MIN_TAXEL_SPACING_MM = 0.1


@dataclass(frozen=True)
class TaxelLayout:
    """Planar sensor geometry: taxel ids and positions in millimetres."""

    ids: np.ndarray
    x_mm: np.ndarray
    y_mm: np.ndarray
    pitch_mm: float = 7.5

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        x = np.asarray(self.x_mm, dtype=np.float64)
        y = np.asarray(self.y_mm, dtype=np.float64)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "x_mm", x)
        object.__setattr__(self, "y_mm", y)
        if ids.size == 0:
            raise ConfigError("layout needs at least one taxel")
        if not (ids.size == x.size == y.size):
            raise ConfigError("ids and coordinates must have equal length")
        if len(np.unique(ids)) != ids.size:
            raise ConfigError("taxel ids must be unique")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise ConfigError("taxel coordinates must be finite")
        if not self.pitch_mm > 0:
            raise ConfigError("pitch_mm must be positive")
        if ids.size > 1:
            pts = np.column_stack([x, y])
            d, _ = cKDTree(pts).query(pts, k=2)
            if d[:, 1].min() < MIN_TAXEL_SPACING_MM:
                raise ConfigError(
                    "degenerate layout: taxels closer than %.1f mm" % MIN_TAXEL_SPACING_MM)

    def __len__(self):
        return int(self.ids.size)

    @property
    def bbox(self):
        """(x_min, y_min, x_max, y_max) of the taxel positions."""
        return (float(self.x_mm.min()), float(self.y_mm.min()),
                float(self.x_mm.max()), float(self.y_mm.max()))

    def grid_shape(self, step_mm):
        """Image (height, width) at the given sampling step."""
        x0, y0, x1, y1 = self.bbox
        w = int(math.ceil((x1 - x0) / step_mm)) + 1
        h = int(math.ceil((y1 - y0) / step_mm)) + 1
        return h, w

    def save_csv(self, path):
        data = formats.encode_layout_csv(zip(self.ids, self.x_mm, self.y_mm))
        with open(path, "wb") as f:
            f.write(data)

    @classmethod
    def load_csv(cls, path, pitch_mm=7.5):
        with open(path, "rb") as f:
            rows = formats.decode_layout_csv(f.read())
        ids = [r[0] for r in rows]
        xs = [r[1] for r in rows]
        ys = [r[2] for r in rows]
        return cls(ids=np.array(ids), x_mm=np.array(xs), y_mm=np.array(ys),
                   pitch_mm=pitch_mm)


@dataclass(frozen=True)
class TaxelFrame:
    """One raw measurement vector, timestamped in milliseconds."""

    values: np.ndarray
    timestamp_ms: int = 0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1:
            raise ConfigError("frame values must be a vector")
        if not np.isfinite(vals).all():
            raise DataError("frame contains non-finite values")
        if vals.size and (vals.min() < 0 or vals.max() > RAW_MAX):
            raise DataError("raw values outside the 16-bit range [0, %d]" % int(RAW_MAX))


@dataclass(frozen=True)
class RasterConfig:
    """Sampling step, splat kernel, and raw-to-normalized mapping.

    ``kernel_sigma_mm=None`` resolves to half the layout pitch at use time.
    ``baseline=None`` resolves to all zeros of the frame length.
    """

    step_mm: float = 1.0
    kernel_sigma_mm: float = None
    cutoff_sigmas: float = 3.0
    baseline: np.ndarray = None
    response_range: float = RAW_MAX

    def __post_init__(self):
        if not self.step_mm > 0:
            raise ConfigError("step_mm must be positive")
        if self.kernel_sigma_mm is not None and not self.kernel_sigma_mm > 0:
            raise ConfigError("kernel_sigma_mm must be positive")
        if not self.response_range > 0:
            raise ConfigError("response_range must be positive")
        if self.baseline is not None:
            object.__setattr__(self, "baseline",
                               np.asarray(self.baseline, dtype=np.float64))

    def sigma_for(self, layout):
        return self.kernel_sigma_mm if self.kernel_sigma_mm is not None \
            else layout.pitch_mm / 2.0


@dataclass(frozen=True)
class TactileImage:
    """Dense single-channel pressure grid, row-major, values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        pix = np.ascontiguousarray(self.pixels, dtype=np.float64)
        object.__setattr__(self, "pixels", pix)
        if pix.ndim != 2:
            raise ConfigError("pixels must be a 2-D grid")
        if not np.isfinite(pix).all():
            raise DataError("image contains non-finite pixels")
        if pix.size and (pix.min() < 0.0 or pix.max() > 1.0):
            raise DataError("pixel values outside [0, 1]")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def to_pgm(self):
        return formats.encode_pgm(self.pixels)


def normalize_frame(frame, config):
    """Affine-clamp raw responses to [0, 1]: (raw - baseline) / response_range."""
    values = frame.values if isinstance(frame, TaxelFrame) else np.asarray(frame, dtype=np.float64)
    baseline = config.baseline
    if baseline is None:
        baseline = np.zeros(values.size)
    if baseline.size != values.size:
        raise ConfigError("baseline length %d != frame length %d"
                          % (baseline.size, values.size))
    out = (values - baseline) / config.response_range
    return np.clip(out, 0.0, 1.0)


def rasterize(layout, normalized, config):
    """Resample normalized taxel values onto the layout's pixel grid.

    For pixel position q: I(q) = sum_i w_i v_i / sum_i w_i with
    w_i = exp(-|q - x_i|^2 / (2 sigma^2)), the sum running over taxels with
    |q - x_i| <= cutoff_sigmas * sigma. Empty neighborhoods give 0.
    """
    if len(layout) == 0:
        raise ConfigError("empty layout")
    vals = np.asarray(normalized, dtype=np.float64)
    if vals.size != len(layout):
        raise ConfigError("value count %d != taxel count %d" % (vals.size, len(layout)))
    if not np.isfinite(vals).all():
        raise DataError("non-finite taxel values")
    if vals.size and (vals.min() < -1e-12 or vals.max() > 1 + 1e-12):
        raise ConfigError("normalized values must lie in [0, 1]")

    sigma = config.sigma_for(layout)
    step = config.step_mm
    radius = config.cutoff_sigmas * sigma
    h, w = layout.grid_shape(step)
    x0, y0, _, _ = layout.bbox

    num = np.zeros((h, w))
    den = np.zeros((h, w))
    inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma)
    r2 = radius * radius

    # Per-taxel pixel-index spans of the cutoff disc; weights computed for
    # all taxels in one batch, then splatted.
    tx, ty = layout.x_mm, layout.y_mm
    c_lo = np.maximum(0, np.ceil((tx - radius - x0) / step).astype(np.intp))
    c_hi = np.minimum(w - 1, np.floor((tx + radius - x0) / step).astype(np.intp))
    r_lo = np.maximum(0, np.ceil((ty - radius - y0) / step).astype(np.intp))
    r_hi = np.minimum(h - 1, np.floor((ty + radius - y0) / step).astype(np.intp))
    pw = int(max(0, (c_hi - c_lo).max() + 1)) if len(layout) else 0
    ph = int(max(0, (r_hi - r_lo).max() + 1)) if len(layout) else 0
    if pw > 0 and ph > 0:
        qx = x0 + (c_lo[:, None] + np.arange(pw)[None, :]) * step
        qy = y0 + (r_lo[:, None] + np.arange(ph)[None, :]) * step
        dx2 = (qx - tx[:, None]) ** 2
        dy2 = (qy - ty[:, None]) ** 2
        d2 = dy2[:, :, None] + dx2[:, None, :]
        wgt = np.where(d2 <= r2, np.exp(-d2 * inv_two_sigma2), 0.0)
        for i in range(len(layout)):
            rs = slice(r_lo[i], r_hi[i] + 1)
            cs = slice(c_lo[i], c_hi[i] + 1)
            if rs.stop <= rs.start or cs.stop <= cs.start:
                continue
            wi = wgt[i, :rs.stop - rs.start, :cs.stop - cs.start]
            num[rs, cs] += wi * vals[i]
            den[rs, cs] += wi

    pix = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    # Convex combination of [0,1] values; clip guards only against rounding.
    return TactileImage(pixels=np.clip(pix, 0.0, 1.0))


def default_layout(rows, cols, pitch_mm=7.5):
    """Hexagonally offset lattice: odd rows shifted by pitch/2 in x."""
    if rows < 1 or cols < 1:
        raise ConfigError("rows and cols must be >= 1")
    ids, xs, ys = [], [], []
    for r in range(rows):
        shift = pitch_mm / 2.0 if r % 2 == 1 else 0.0
        for c in range(cols):
            ids.append(r * cols + c)
            xs.append(c * pitch_mm + shift)
            ys.append(r * pitch_mm)
    return TaxelLayout(ids=np.array(ids), x_mm=np.array(xs), y_mm=np.array(ys),
                       pitch_mm=pitch_mm)
