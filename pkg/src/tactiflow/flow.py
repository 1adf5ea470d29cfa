"""From-scratch dense optical flow (Gunnar Farneback method).

Each image is locally modelled as a quadratic f(x + w) ~ w'Aw + b'w + c fitted
per pixel by weighted least squares under a separable Gaussian applicability.
Displacement between two expansions is solved from the averaged constraint
A_bar d = delta_b, accumulated over a uniform window, iterated with warping,
and run coarse-to-fine over a binomial-smoothed image pyramid.

Border policy: the applicability window is truncated at image edges and the
normal equations are formed from the truncated weights only (normalized
convolution with a border-indicator certainty), so edges see no phantom data.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d, uniform_filter

from . import formats
from .errors import ConfigError, DataError

# Basis monomial exponents, order: 1, x, y, x^2, y^2, xy.
_PX = (0, 1, 0, 2, 0, 1)
_PY = (0, 0, 1, 0, 2, 1)

_BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

_SINGULAR_DET = 1e-9

_gram_inverse_cache = {}
_GRAM_CACHE_MAX = 32


@dataclass(frozen=True)
class FlowConfig:
    """Pyramid and expansion parameters.

    Defaults target small tactile images rather than camera frames.
    """

    pyramid_levels: int = 3
    pyramid_scale: float = 0.5
    window_size: int = 9
    poly_n: int = 5
    poly_sigma: float = 1.1
    iterations: int = 3

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ConfigError("pyramid_levels must be >= 1")
        if not 0.0 < self.pyramid_scale < 1.0:
            raise ConfigError("pyramid_scale must lie in (0, 1)")
        for name in ("window_size", "poly_n"):
            val = getattr(self, name)
            if val < 3 or val % 2 == 0:
                raise ConfigError("%s must be odd and >= 3" % name)
        if not self.poly_sigma > 0:
            raise ConfigError("poly_sigma must be positive")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")

    def to_dict(self):
        return {
            "pyramid_levels": self.pyramid_levels,
            "pyramid_scale": self.pyramid_scale,
            "window_size": self.window_size,
            "poly_n": self.poly_n,
            "poly_sigma": self.poly_sigma,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class PolyExpansion:
    """Per-pixel quadratic coefficients: A (H,W,2,2) symmetric, b (H,W,2), c (H,W)."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @property
    def shape(self):
        return self.c.shape


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement in pixels/frame; u along columns, v along rows."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.ascontiguousarray(self.u, dtype=np.float64)
        v = np.ascontiguousarray(self.v, dtype=np.float64)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        if u.shape != v.shape or u.ndim != 2:
            raise ConfigError("u and v must share one 2-D shape")
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise DataError("flow field contains non-finite values")

    @property
    def height(self):
        return self.u.shape[0]

    @property
    def width(self):
        return self.u.shape[1]

    def to_tflo(self):
        return formats.encode_tflo(self.u, self.v)

    @classmethod
    def from_tflo(cls, data):
        u, v = formats.decode_tflo(data)
        return cls(u=u.astype(np.float64), v=v.astype(np.float64))


def _as_pixels(image):
    pix = getattr(image, "pixels", image)
    pix = np.asarray(pix, dtype=np.float64)
    if pix.ndim != 2:
        raise ConfigError("expected a 2-D image")
    if not np.isfinite(pix).all():
        raise DataError("image contains non-finite values")
    return pix


def _poly_kernels(poly_n, poly_sigma):
    m = poly_n // 2
    t = np.arange(-m, m + 1, dtype=np.float64)
    g = np.exp(-(t * t) / (2.0 * poly_sigma * poly_sigma))
    g /= g.sum()
    return [g * t**p for p in range(5)]


def _gram_inverse(h, w, poly_n, poly_sigma):
    """Inverse normal matrices of the truncated-window fit, cached per geometry.

    The Gram matrix G(x) = sum_w a(w) phi_i(w) phi_j(w) over in-bounds offsets
    depends only on the pixel's distance to the borders, never on the signal,
    so it is precomputed for the whole grid and reused across images.
    """
    key = (h, w, poly_n, float(poly_sigma))
    hit = _gram_inverse_cache.get(key)
    if hit is not None:
        return hit
    kernels = _poly_kernels(poly_n, poly_sigma)
    # 1-D truncated moment profiles of the all-ones certainty.
    col_m = [correlate1d(np.ones(w), k, mode="constant", cval=0.0) for k in kernels]
    row_m = [correlate1d(np.ones(h), k, mode="constant", cval=0.0) for k in kernels]
    G = np.empty((h, w, 6, 6))
    for i in range(6):
        for j in range(i, 6):
            px, py = _PX[i] + _PX[j], _PY[i] + _PY[j]
            G[:, :, i, j] = np.outer(row_m[py], col_m[px])
            if i != j:
                G[:, :, j, i] = G[:, :, i, j]
    Ginv = np.linalg.inv(G)
    if len(_gram_inverse_cache) >= _GRAM_CACHE_MAX:
        _gram_inverse_cache.clear()
    _gram_inverse_cache[key] = Ginv
    return Ginv


def poly_expand(image, poly_n=5, poly_sigma=1.1):
    """Fit the quadratic basis {1, x, y, x^2, y^2, xy} around every pixel.

    Weighted least squares under Gaussian applicability of std ``poly_sigma``
    over a ``poly_n`` x ``poly_n`` window, computed via separable correlations;
    at borders the window is truncated and weights renormalized through the
    per-pixel normal equations.
    """
    f = _as_pixels(image)
    h, w = f.shape
    if min(h, w) < poly_n:
        raise ConfigError("image %dx%d smaller than poly_n=%d" % (h, w, poly_n))

    kernels = _poly_kernels(poly_n, poly_sigma)
    v = np.empty((h, w, 6))
    for i in range(6):
        tmp = correlate1d(f, kernels[_PX[i]], axis=1, mode="constant", cval=0.0)
        v[:, :, i] = correlate1d(tmp, kernels[_PY[i]], axis=0, mode="constant", cval=0.0)

    r = np.einsum("hwij,hwj->hwi", _gram_inverse(h, w, poly_n, poly_sigma), v)

    A = np.empty((h, w, 2, 2))
    A[:, :, 0, 0] = r[:, :, 3]
    A[:, :, 1, 1] = r[:, :, 4]
    A[:, :, 0, 1] = 0.5 * r[:, :, 5]
    A[:, :, 1, 0] = A[:, :, 0, 1]
    b = np.stack([r[:, :, 1], r[:, :, 2]], axis=-1)
    return PolyExpansion(A=A, b=b, c=r[:, :, 0])


def _bilinear_weights(rows, cols, shape):
    """Corner indices and fractions for clamped bilinear sampling."""
    h, w = shape
    r0 = np.floor(rows).astype(np.intp)
    c0 = np.floor(cols).astype(np.intp)
    fr = rows - r0
    fc = cols - c0
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    return (r0, c0, r1, c1, fr, fc)


def _bilinear_apply(plane, wts):
    r0, c0, r1, c1, fr, fc = wts
    top = plane[r0, c0]
    top += fc * (plane[r0, c1] - top)
    bot = plane[r1, c0]
    bot += fc * (plane[r1, c1] - bot)
    return top + fr * (bot - top)


def _bilinear(plane, rows, cols):
    """Sample a 2-D plane at real coordinates (clamped to bounds)."""
    return _bilinear_apply(plane, _bilinear_weights(rows, cols, plane.shape))


def flow_single_level(prev, curr, initial_flow, config):
    """One-scale Farneback displacement update, iterated with warping.

    Per pixel x with running estimate d: sample the current expansion at
    x~ = x + d (bilinear, clamped), form A_bar = (A_prev(x) + A_curr(x~)) / 2
    and delta_b = -(b_curr(x~) - b_prev(x)) / 2 + A_bar d, average
    G = A_bar'A_bar and h = A_bar'delta_b uniformly over the window, and solve
    d = G^-1 h. Pixels with det(G) below the singularity threshold keep their
    prior displacement.
    """
    if prev.shape != curr.shape:
        raise ConfigError("expansion dimensions differ: %r vs %r"
                          % (prev.shape, curr.shape))
    h, w = prev.shape
    if initial_flow.u.shape != (h, w):
        raise ConfigError("initial flow dimensions differ from expansions")

    rows, cols = np.indices((h, w), dtype=np.float64)
    u = initial_flow.u.copy()
    v = initial_flow.v.copy()

    a11p, a12p, a22p = prev.A[:, :, 0, 0], prev.A[:, :, 0, 1], prev.A[:, :, 1, 1]
    b1p, b2p = prev.b[:, :, 0], prev.b[:, :, 1]
    a11c, a12c, a22c = curr.A[:, :, 0, 0], curr.A[:, :, 0, 1], curr.A[:, :, 1, 1]
    b1c, b2c = curr.b[:, :, 0], curr.b[:, :, 1]
    win = config.window_size

    for _ in range(config.iterations):
        sr = np.clip(rows + v, 0.0, h - 1.0)
        sc = np.clip(cols + u, 0.0, w - 1.0)
        wts = _bilinear_weights(sr, sc, (h, w))
        a11 = 0.5 * (a11p + _bilinear_apply(a11c, wts))
        a12 = 0.5 * (a12p + _bilinear_apply(a12c, wts))
        a22 = 0.5 * (a22p + _bilinear_apply(a22c, wts))
        db1 = -0.5 * (_bilinear_apply(b1c, wts) - b1p) + a11 * u + a12 * v
        db2 = -0.5 * (_bilinear_apply(b2c, wts) - b2p) + a12 * u + a22 * v

        g11 = uniform_filter(a11 * a11 + a12 * a12, size=win, mode="nearest")
        g12 = uniform_filter(a12 * (a11 + a22), size=win, mode="nearest")
        g22 = uniform_filter(a12 * a12 + a22 * a22, size=win, mode="nearest")
        h1 = uniform_filter(a11 * db1 + a12 * db2, size=win, mode="nearest")
        h2 = uniform_filter(a12 * db1 + a22 * db2, size=win, mode="nearest")

        det = g11 * g22 - g12 * g12
        ok = det >= _SINGULAR_DET
        safe = np.where(ok, det, 1.0)
        u = np.where(ok, (g22 * h1 - g12 * h2) / safe, u)
        v = np.where(ok, (g11 * h2 - g12 * h1) / safe, v)

    return FlowField(u=u, v=v)


def _level_shape(shape, scale, level):
    h, w = shape
    for _ in range(level):
        h = int(math.floor((h - 1) * scale)) + 1
        w = int(math.floor((w - 1) * scale)) + 1
    return h, w


def _downsample(pix, scale):
    """Binomial 5-tap smoothing, then bilinear subsampling by ``scale``."""
    sm = correlate1d(pix, _BINOMIAL5, axis=0, mode="reflect")
    sm = correlate1d(sm, _BINOMIAL5, axis=1, mode="reflect")
    h, w = pix.shape
    nh, nw = _level_shape((h, w), scale, 1)
    rows = np.arange(nh, dtype=np.float64) / scale
    cols = np.arange(nw, dtype=np.float64) / scale
    rows = np.minimum(rows, h - 1.0)
    cols = np.minimum(cols, w - 1.0)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return _bilinear(sm, rr, cc)


def _upsample_flow(flow, shape_fine, scale):
    """Resample a coarse flow to the finer grid, scaling displacements by 1/scale."""
    hf, wf = shape_fine
    hc, wc = flow.u.shape
    rows = np.minimum(np.arange(hf, dtype=np.float64) * scale, hc - 1.0)
    cols = np.minimum(np.arange(wf, dtype=np.float64) * scale, wc - 1.0)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    u = _bilinear(flow.u, rr, cc) / scale
    v = _bilinear(flow.v, rr, cc) / scale
    return FlowField(u=u, v=v)


def pyramid_expansions(image, config):
    """Polynomial expansions of an image at every pyramid level, fine to coarse.

    Exposed so sequence processing can expand each frame once and reuse it for
    both flow pairs the frame participates in.
    """
    pix = _as_pixels(image)
    ch, cw = _level_shape(pix.shape, config.pyramid_scale, config.pyramid_levels - 1)
    if min(ch, cw) < config.poly_n:
        raise ConfigError(
            "image %dx%d too small for %d pyramid levels (coarsest %dx%d < poly_n=%d)"
            % (pix.shape[0], pix.shape[1], config.pyramid_levels, ch, cw, config.poly_n))
    levels = []
    for lvl in range(config.pyramid_levels):
        levels.append(poly_expand(pix, config.poly_n, config.poly_sigma))
        if lvl + 1 < config.pyramid_levels:
            pix = _downsample(pix, config.pyramid_scale)
    return levels


def flow_from_expansions(prev_levels, curr_levels, config):
    """Coarse-to-fine flow from precomputed per-level expansions."""
    if len(prev_levels) != len(curr_levels):
        raise ConfigError("expansion pyramids have different depths")
    flow = None
    for prev, curr in zip(reversed(prev_levels), reversed(curr_levels)):
        if prev.shape != curr.shape:
            raise ConfigError("pyramid level shapes differ: %r vs %r"
                              % (prev.shape, curr.shape))
        if flow is None:
            init = FlowField(u=np.zeros(prev.shape), v=np.zeros(prev.shape))
        else:
            init = _upsample_flow(flow, prev.shape, config.pyramid_scale)
        flow = flow_single_level(prev, curr, init, config)
    return flow


def farneback_flow(prev, curr, config=None):
    """Dense displacement field from the previous to the current tactile image."""
    config = config or FlowConfig()
    p = _as_pixels(prev)
    c = _as_pixels(curr)
    if p.shape != c.shape:
        raise ConfigError("image dimensions differ: %r vs %r" % (p.shape, c.shape))
    return flow_from_expansions(pyramid_expansions(p, config),
                                pyramid_expansions(c, config), config)
