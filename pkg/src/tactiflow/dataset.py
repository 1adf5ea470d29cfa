"""Synthetic tactile gesture sequences with deliberate shape aliasing.

Five gesture classes are generated from a shared continuous pressure field of
Gaussian blobs sampled at taxel positions. Grasp, Twist and Pull start from
the identical initial hand layout (for a fixed style and seed) and differ only
in contact kinematics, so static shape alone cannot separate them:

  Grasp       fingertip arc + thumb, intensity ramp then static
  TwoHandGrasp two hand layouts, static
  Twist       Grasp layout, blob centers rotating about the arc center
  Pull        Grasp layout, centers translating along -x
  Push        finger-pad row translating along +y with growing intensity

All randomness flows through per-sample streams derived from
(master_seed, user_id, class, rep), so generation order never matters.
"""

import json
import os
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from . import formats
from .errors import ConfigError, DataError
from .raster import RAW_MAX, TaxelFrame, TaxelLayout

GENERATOR_VERSION = 1
FRAME_DT_MS = 100

BASELINE_RAW = 1000.0
RESPONSE_RANGE_RAW = 40000.0

MIN_FRAMES = 5
MAX_FRAMES = 27

# Class kinematics: rotation rate and translation speed per unit speed_scale,
# and the length of the initial intensity ramp.
TWIST_OMEGA = 0.15          # rad/frame
TRANSLATE_SPEED = 2.0       # mm/frame
RAMP_FRAMES = 3

DURATION_MODEL = "uniform-int[%d,%d] per user" % (MIN_FRAMES, MAX_FRAMES)


class GestureClass(IntEnum):
    GRASP = 0
    TWO_HAND_GRASP = 1
    TWIST = 2
    PUSH = 3
    PULL = 4


CLASS_NAMES = {
    GestureClass.GRASP: "Grasp",
    GestureClass.TWO_HAND_GRASP: "TwoHandGrasp",
    GestureClass.TWIST: "Twist",
    GestureClass.PUSH: "Push",
    GestureClass.PULL: "Pull",
}

N_CLASSES = len(GestureClass)

# The aliased trio sharing one initial blob layout.
ALIASED_CLASSES = (GestureClass.GRASP, GestureClass.TWIST, GestureClass.PULL)


@dataclass(frozen=True)
class UserStyle:
    """Per-user interaction style driving blob geometry and dynamics."""

    blob_count: int = 5
    blob_radius_mm: float = 7.0
    force_scale: float = 0.9
    placement_offset_mm: tuple = (0.0, 0.0)
    speed_scale: float = 1.0
    duration_frames: int = 15
    noise_std: float = 0.006

    def __post_init__(self):
        if self.blob_count < 1:
            raise ConfigError("blob_count must be >= 1")
        if not 0.0 < self.force_scale <= 1.0:
            raise ConfigError("force_scale must lie in (0, 1]")
        if not MIN_FRAMES <= self.duration_frames <= MAX_FRAMES:
            raise ConfigError("duration_frames must lie in [%d, %d]"
                              % (MIN_FRAMES, MAX_FRAMES))
        if self.noise_std < 0:
            raise ConfigError("noise_std must be nonnegative")


@dataclass(frozen=True)
class GestureSample:
    """One labeled recording: raw taxel frames at 10 Hz."""

    label: GestureClass
    frames: tuple
    user_id: int
    seed: int

    def __post_init__(self):
        if not MIN_FRAMES <= len(self.frames) <= MAX_FRAMES:
            raise ConfigError("sample length %d outside [%d, %d]"
                              % (len(self.frames), MIN_FRAMES, MAX_FRAMES))
        object.__setattr__(self, "frames", tuple(self.frames))

    def frame_matrix(self):
        """(T, N) float32 raw values, the TXSQ payload."""
        return np.stack([f.values for f in self.frames]).astype(np.float32)


@dataclass
class Dataset:
    samples: list
    layout: TaxelLayout
    manifest: dict = field(default_factory=dict)

    def class_counts(self):
        counts = {name: 0 for name in CLASS_NAMES.values()}
        for s in self.samples:
            counts[CLASS_NAMES[s.label]] += 1
        return counts

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class Split:
    train_indices: np.ndarray
    test_indices: np.ndarray


def blob_field(points, centers, radii, amplitudes):
    """Continuous Gaussian-blob pressure field sampled at (N, 2) points."""
    pts = np.asarray(points, dtype=np.float64)
    out = np.zeros(len(pts))
    for (cx, cy), rad, amp in zip(centers, radii, amplitudes):
        d2 = (pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2
        out += amp * np.exp(-d2 / (2.0 * rad * rad))
    return out


def _hand_blobs(rng, style, center):
    """Fingertip arc plus thumb. Index 0 is the thumb when blob_count > 1.

    Consumes a fixed number of draws per blob so classes sharing this layout
    consume the stream identically.
    """
    arc_r = 3.0 * style.blob_radius_mm
    n = style.blob_count
    centers = np.empty((n, 2))
    if n == 1:
        angles = np.array([-np.pi / 2.0])
        radii_from_center = np.array([0.75 * arc_r])
    else:
        spread = np.deg2rad(100.0)
        tips = np.pi / 2.0 + np.linspace(-spread / 2.0, spread / 2.0, n - 1)
        angles = np.concatenate([[-np.pi / 2.0], tips])
        radii_from_center = np.concatenate([[0.75 * arc_r], np.full(n - 1, arc_r)])
    angles = angles + rng.uniform(-0.06, 0.06, size=n)
    radii_from_center = radii_from_center * rng.uniform(0.92, 1.08, size=n)
    centers[:, 0] = center[0] + radii_from_center * np.cos(angles)
    centers[:, 1] = center[1] + radii_from_center * np.sin(angles)
    radii = style.blob_radius_mm * rng.uniform(0.9, 1.1, size=n)
    amps = style.force_scale * rng.uniform(0.75, 1.0, size=n)
    return centers, radii, amps


def _pad_row_blobs(rng, style, center):
    """Row of finger-pad blobs for Push, centered slightly below the hand center."""
    n = style.blob_count
    spacing = 2.2 * style.blob_radius_mm
    xs = center[0] + (np.arange(n) - (n - 1) / 2.0) * spacing
    ys = np.full(n, center[1] - 1.5 * style.blob_radius_mm)
    centers = np.column_stack([xs, ys])
    centers += rng.uniform(-1.5, 1.5, size=centers.shape)
    radii = style.blob_radius_mm * rng.uniform(0.9, 1.1, size=n)
    amps = style.force_scale * rng.uniform(0.75, 1.0, size=n)
    return centers, radii, amps


def _initial_blobs(gesture, rng, style, layout):
    x0, y0, x1, y1 = layout.bbox
    base = np.array([(x0 + x1) / 2.0, (y0 + y1) / 2.0])
    center = base + np.asarray(style.placement_offset_mm, dtype=np.float64)
    if gesture == GestureClass.TWO_HAND_GRASP:
        gap = 2.2 * 3.0 * style.blob_radius_mm
        c1, r1, a1 = _hand_blobs(rng, style, center - [gap / 2.0, 0.0])
        c2, r2, a2 = _hand_blobs(rng, style, center + [gap / 2.0, 0.0])
        blobs = (np.vstack([c1, c2]), np.concatenate([r1, r2]),
                 np.concatenate([a1, a2]))
    elif gesture == GestureClass.PUSH:
        blobs = _pad_row_blobs(rng, style, center)
    else:
        blobs = _hand_blobs(rng, style, center)
    centers = blobs[0]
    inside = ((centers[:, 0] >= x0) & (centers[:, 0] <= x1)
              & (centers[:, 1] >= y0) & (centers[:, 1] <= y1))
    if not inside.all():
        raise ConfigError("blob placement outside layout bbox")
    return center, blobs


def _centers_at(gesture, k, hand_center, centers0, speed_scale):
    if k == 0 or gesture in (GestureClass.GRASP, GestureClass.TWO_HAND_GRASP):
        return centers0
    if gesture == GestureClass.TWIST:
        ang = TWIST_OMEGA * speed_scale * k
        ca, sa = np.cos(ang), np.sin(ang)
        rel = centers0 - hand_center
        return hand_center + rel @ np.array([[ca, sa], [-sa, ca]])
    if gesture == GestureClass.PULL:
        return centers0 + [-TRANSLATE_SPEED * speed_scale * k, 0.0]
    if gesture == GestureClass.PUSH:
        return centers0 + [0.0, TRANSLATE_SPEED * speed_scale * k]
    raise ConfigError("unknown gesture %r" % (gesture,))


def _intensity_at(gesture, k, n_frames):
    if gesture == GestureClass.PUSH:
        return 0.4 + 0.6 * (k + 1) / n_frames
    return min(1.0, (k + 1) / RAMP_FRAMES)


def synth_sample(gesture, style, layout, rng_seed):
    """Generate one gesture sample.

    Grasp, Twist and Pull consume the RNG stream identically while building
    the initial layout, so for equal style and seed their first frames are
    bit-identical (the shape-aliasing construction).
    """
    gesture = GestureClass(gesture)
    rng = np.random.default_rng(rng_seed)
    hand_center, (centers0, radii, amps) = _initial_blobs(gesture, rng, style, layout)
    points = np.column_stack([layout.x_mm, layout.y_mm])

    n_frames = style.duration_frames
    frames = []
    for k in range(n_frames):
        centers = _centers_at(gesture, k, hand_center, centers0, style.speed_scale)
        fld = blob_field(points, centers, radii, amps) * _intensity_at(gesture, k, n_frames)
        noise = rng.standard_normal(len(points)) * (style.noise_std * RESPONSE_RANGE_RAW)
        raw = BASELINE_RAW + fld * RESPONSE_RANGE_RAW + noise
        raw = np.clip(raw, 0.0, RAW_MAX).astype(np.float32)
        frames.append(TaxelFrame(values=raw, timestamp_ms=k * FRAME_DT_MS))

    seed_int = rng_seed if isinstance(rng_seed, (int, np.integer)) else 0
    return GestureSample(label=gesture, frames=tuple(frames),
                         user_id=0, seed=int(seed_int))


def _sample_seed(master_seed, user_id, gesture, rep):
    ss = np.random.SeedSequence([int(master_seed), int(user_id), int(gesture), int(rep)])
    return int(ss.generate_state(1, np.uint64)[0])


def _draw_style(rng, layout):
    x0, y0, x1, y1 = layout.bbox
    off_x = 0.045 * max(x1 - x0, 1.0)
    off_y = 0.05 * max(y1 - y0, 1.0)
    offsets = [(rng.uniform(-off_x, off_x), rng.uniform(-off_y, off_y))
               for _ in range(2)]
    style = UserStyle(
        blob_count=int(rng.integers(4, 7)),
        blob_radius_mm=float(rng.uniform(5.0, 8.5)),
        force_scale=float(rng.uniform(0.55, 1.0)),
        placement_offset_mm=offsets[0],
        speed_scale=float(rng.uniform(0.7, 1.3)),
        duration_frames=int(rng.integers(MIN_FRAMES, MAX_FRAMES + 1)),
        noise_std=float(rng.uniform(0.004, 0.012)),
    )
    return style, offsets


def synth_dataset(users, reps_per_class, layout, master_seed=0):
    """Generate users x 5 x reps_per_class labeled samples.

    Each user gets one style drawn from the master seed and two placement
    offsets (the two standing positions), alternated across repetitions.
    """
    if users < 1:
        raise ConfigError("users must be >= 1")
    if reps_per_class < 1:
        raise ConfigError("reps_per_class must be >= 1")
    samples = []
    for user_id in range(users):
        style_rng = np.random.default_rng([int(master_seed), 0xA11CE, user_id])
        style, offsets = _draw_style(style_rng, layout)
        for gesture in GestureClass:
            for rep in range(reps_per_class):
                st = replace(style, placement_offset_mm=offsets[rep % 2])
                seed = _sample_seed(master_seed, user_id, gesture, rep)
                sample = synth_sample(gesture, st, layout, seed)
                sample = replace(sample, user_id=user_id)
                samples.append(sample)

    ds = Dataset(samples=samples, layout=layout)
    ds.manifest = {
        "generator_version": GENERATOR_VERSION,
        "master_seed": int(master_seed),
        "users": users,
        "reps_per_class": reps_per_class,
        "n_samples": len(samples),
        "class_counts": ds.class_counts(),
        "baseline_raw": BASELINE_RAW,
        "response_range_raw": RESPONSE_RANGE_RAW,
        "duration_model": DURATION_MODEL,
        "frame_dt_ms": FRAME_DT_MS,
    }
    return ds


def split_dataset(dataset, test_per_class, seed=0):
    """Uniformly draw an exact per-class test set; the rest is train."""
    if test_per_class < 0:
        raise ConfigError("test_per_class must be >= 0")
    rng = np.random.default_rng(seed)
    labels = np.array([int(s.label) for s in dataset.samples])
    test = []
    for gesture in GestureClass:
        idx = np.flatnonzero(labels == int(gesture))
        if len(idx) <= test_per_class:
            raise ConfigError(
                "class %s has %d samples, need more than test_per_class=%d"
                % (CLASS_NAMES[gesture], len(idx), test_per_class))
        test.extend(rng.permutation(idx)[:test_per_class].tolist())
    test = np.array(sorted(test), dtype=np.intp)
    mask = np.ones(len(dataset.samples), dtype=bool)
    mask[test] = False
    train = np.flatnonzero(mask)
    return Split(train_indices=train, test_indices=test)


def _zero_like(frame, timestamp_ms):
    if isinstance(frame, TaxelFrame):
        return TaxelFrame(values=np.zeros_like(frame.values),
                          timestamp_ms=timestamp_ms)
    if isinstance(frame, np.ndarray):
        return np.zeros_like(frame)
    # AugmentedFrame / TactileImage style objects expose .pixels or channels.
    if hasattr(frame, "pixels"):
        return type(frame)(pixels=np.zeros_like(frame.pixels))
    if hasattr(frame, "r"):
        return type(frame)(r=np.zeros_like(frame.r), g=np.zeros_like(frame.g),
                           b=np.zeros_like(frame.b))
    raise ConfigError("cannot build a blank frame for %r" % type(frame))


def _pad_to(frames, L):
    frames = list(frames)
    base_ts = len(frames) * FRAME_DT_MS
    for j in range(L - len(frames)):
        frames.append(_zero_like(frames[0], base_ts + j * FRAME_DT_MS))
    return frames


def sliding_windows(frames, L):
    """All contiguous L-frame windows (stride 1); short inputs give one
    window padded at the end with blank frames."""
    if L < 1:
        raise ConfigError("window length must be >= 1")
    frames = list(frames)
    if not frames:
        raise ConfigError("empty frame sequence")
    if len(frames) >= L:
        return [frames[i:i + L] for i in range(len(frames) - L + 1)]
    return [_pad_to(frames, L)]


def first_window(frames, L):
    """The test-time rule: first L frames, blank-padded if the sample is short."""
    if L < 1:
        raise ConfigError("window length must be >= 1")
    frames = list(frames)
    if not frames:
        raise ConfigError("empty frame sequence")
    if len(frames) >= L:
        return frames[:L]
    return _pad_to(frames, L)


def save_dataset(dataset, out_dir):
    """Write layout.csv, samples/*.txsq and manifest.json under ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    sample_dir = os.path.join(out_dir, "samples")
    os.makedirs(sample_dir, exist_ok=True)
    dataset.layout.save_csv(os.path.join(out_dir, "layout.csv"))
    entries = []
    for i, s in enumerate(dataset.samples):
        rel = os.path.join("samples", "sample_%05d.txsq" % i)
        data = formats.encode_txsq(int(s.label), s.user_id, s.seed, s.frame_matrix())
        with open(os.path.join(out_dir, rel), "wb") as f:
            f.write(data)
        entries.append({"path": rel, "label": CLASS_NAMES[s.label],
                        "user_id": s.user_id, "n_frames": len(s.frames)})
    manifest = dict(dataset.manifest)
    manifest["layout_csv"] = "layout.csv"
    manifest["layout_pitch_mm"] = dataset.layout.pitch_mm
    manifest["n_taxels"] = len(dataset.layout)
    manifest["samples"] = entries
    manifest["class_counts"] = dataset.class_counts()
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    return os.path.join(out_dir, "manifest.json")


_NAME_TO_CLASS = {name: cls for cls, name in CLASS_NAMES.items()}


def load_dataset(dataset_dir):
    """Load a dataset written by :func:`save_dataset`."""
    manifest_path = os.path.join(dataset_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise DataError("missing manifest: %s" % manifest_path)
    with open(manifest_path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    layout = TaxelLayout.load_csv(os.path.join(dataset_dir, manifest["layout_csv"]),
                                  pitch_mm=manifest.get("layout_pitch_mm", 7.5))
    samples = []
    for entry in manifest["samples"]:
        path = os.path.join(dataset_dir, entry["path"])
        if not os.path.exists(path):
            raise DataError("missing sample file: %s" % path)
        with open(path, "rb") as f:
            label, user_id, seed, mat = formats.decode_txsq(f.read())
        frames = tuple(TaxelFrame(values=mat[k], timestamp_ms=k * FRAME_DT_MS)
                       for k in range(mat.shape[0]))
        samples.append(GestureSample(label=GestureClass(label), frames=frames,
                                     user_id=user_id, seed=seed))
    return Dataset(samples=samples, layout=layout, manifest=manifest)
