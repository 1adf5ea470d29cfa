"""Augmented tactile frames: pressure + polar-encoded dense flow.

Channel layout: R = pressure in [0,1], G = flow magnitude normalized by a
fixed ceiling, B = flow direction mapped from (-pi, pi] onto [0, 1). The
first frame of a sequence is paired with an all-zero predecessor image.
"""

from dataclasses import dataclass

import numpy as np

from . import formats
from .errors import ConfigError
from .flow import FlowConfig, flow_from_expansions, pyramid_expansions
from .raster import TactileImage, normalize_frame, rasterize

ZERO_DIRECTION_EPS = 1e-6  # of v_max; below this the angle is defined as 0


@dataclass(frozen=True)
class AugmentConfig:
    """Fixed magnitude normalization ceiling, in pixels/frame.

    A fixed ceiling (rather than per-frame max) keeps flow magnitudes
    comparable across frames, so fading dynamics stay visible.
    """

    v_max: float = 5.0

    def __post_init__(self):
        if not self.v_max > 0:
            raise ConfigError("v_max must be positive")


@dataclass(frozen=True)
class AugmentedFrame:
    """3-channel tactile frame; all channels share dimensions and live in [0,1]."""

    r: np.ndarray
    g: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if not (self.r.shape == self.g.shape == self.b.shape) or self.r.ndim != 2:
            raise ConfigError("channels must share one 2-D shape")

    @property
    def height(self):
        return self.r.shape[0]

    @property
    def width(self):
        return self.r.shape[1]

    def stacked(self):
        """(H, W, 3) view in RGB order."""
        return np.stack([self.r, self.g, self.b], axis=-1)

    def to_ppm(self):
        return formats.encode_ppm(self.r, self.g, self.b)


def flow_to_polar(flow, config=None):
    """Encode a flow field as (magnitude, direction) channels in [0,1].

    magnitude = clamp(|d| / v_max, 0, 1); direction maps atan2(v, u) from
    [-pi, pi) to [0, 1). Zero-magnitude pixels get direction 0 so the
    encoding stays single-valued.
    """
    config = config or AugmentConfig()
    speed = np.hypot(flow.u, flow.v)
    mag = np.clip(speed / config.v_max, 0.0, 1.0)
    direction = np.mod((np.arctan2(flow.v, flow.u) + np.pi) / (2.0 * np.pi), 1.0)
    direction[speed < ZERO_DIRECTION_EPS * config.v_max] = 0.0
    return mag, direction


def augment_frame(pressure, flow, config=None):
    """Join a pressure image and its flow field into a 3-channel frame."""
    pix = pressure.pixels if isinstance(pressure, TactileImage) else np.asarray(pressure)
    if pix.shape != flow.u.shape:
        raise ConfigError("pressure %r and flow %r dimensions differ"
                          % (pix.shape, flow.u.shape))
    g, b = flow_to_polar(flow, config)
    return AugmentedFrame(r=pix, g=g, b=b)


def process_sequence(frames, flow_cfg=None, aug_cfg=None):
    """Augment a whole pressure-image sequence.

    Frame k is paired with flow computed from frame k-1 to frame k; frame 0
    uses an all-zero predecessor. Each frame's polynomial expansion pyramid
    is computed once and shared between the two pairs it participates in.
    """
    if not frames:
        raise ConfigError("empty frame sequence")
    flow_cfg = flow_cfg or FlowConfig()
    aug_cfg = aug_cfg or AugmentConfig()
    shapes = {f.pixels.shape for f in frames}
    if len(shapes) != 1:
        raise ConfigError("mixed frame dimensions: %r" % shapes)

    zero = TactileImage(pixels=np.zeros(frames[0].pixels.shape))
    prev_levels = pyramid_expansions(zero, flow_cfg)
    out = []
    for frame in frames:
        curr_levels = pyramid_expansions(frame, flow_cfg)
        flow = flow_from_expansions(prev_levels, curr_levels, flow_cfg)
        out.append(augment_frame(frame, flow, aug_cfg))
        prev_levels = curr_levels
    return out


def process_sample_frames(raw_frames, layout, raster_cfg, flow_cfg=None, aug_cfg=None):
    """Raw taxel matrix (T, N) -> augmented sequence as a float32 (T, H, W, 3) array.

    Rasterizes each frame, then augments the image sequence. This is the
    pipeline entry used by dataset processing and the CLI cache.
    """
    raw = np.asarray(raw_frames, dtype=np.float64)
    if raw.ndim != 2:
        raise ConfigError("raw frames must be a (T, N) matrix")
    images = [rasterize(layout, normalize_frame(row, raster_cfg), raster_cfg)
              for row in raw]
    augmented = process_sequence(images, flow_cfg, aug_cfg)
    return np.stack([a.stacked() for a in augmented]).astype(np.float32)
