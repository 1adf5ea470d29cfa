import math

import numpy as np
import pytest

from tactiflow import (ConfigError, DataError, RasterConfig, TactileImage,
                       TaxelFrame, TaxelLayout, default_layout,
                       normalize_frame, rasterize)


def brute_force_raster(layout, values, config):
    """Direct double-loop kernel sum; the independent oracle for rasterize."""
    sigma = config.sigma_for(layout)
    radius = config.cutoff_sigmas * sigma
    step = config.step_mm
    h, w = layout.grid_shape(step)
    x0, y0, _, _ = layout.bbox
    out = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            qx = x0 + c * step
            qy = y0 + r * step
            num = den = 0.0
            for tx, ty, tv in zip(layout.x_mm, layout.y_mm, values):
                d2 = (qx - tx) ** 2 + (qy - ty) ** 2
                if d2 <= radius * radius:
                    wgt = math.exp(-d2 / (2.0 * sigma * sigma))
                    num += wgt * tv
                    den += wgt
            out[r, c] = num / den if den > 0 else 0.0
    return out


def small_random_layout(rng, n):
    """Random positions with the 0.1 mm spacing guard respected."""
    pts = []
    while len(pts) < n:
        p = rng.uniform(0, 30, size=2)
        if all((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 >= 1.0 for q in pts):
            pts.append(p)
    pts = np.array(pts)
    return TaxelLayout(ids=np.arange(n), x_mm=pts[:, 0], y_mm=pts[:, 1], pitch_mm=5.0)


def test_normalize_baseline_case():
    cfg = RasterConfig(baseline=np.full(4, 100.0), response_range=1000.0)
    frame = TaxelFrame(values=np.full(4, 100.0))
    assert np.array_equal(normalize_frame(frame, cfg), np.zeros(4))


def test_normalize_saturation_case():
    cfg = RasterConfig(baseline=np.full(3, 200.0), response_range=500.0)
    frame = TaxelFrame(values=np.full(3, 700.0))
    assert np.array_equal(normalize_frame(frame, cfg), np.ones(3))


def test_normalize_midpoint():
    cfg = RasterConfig(baseline=np.full(1, 100.0), response_range=1000.0)
    out = normalize_frame(TaxelFrame(values=np.array([600.0])), cfg)
    assert out[0] == pytest.approx(0.5, abs=1e-15)


def test_normalize_length_mismatch():
    cfg = RasterConfig(baseline=np.zeros(3), response_range=1.0)
    with pytest.raises(ConfigError):
        normalize_frame(TaxelFrame(values=np.zeros(4)), cfg)


def test_rasterize_zero_input():
    layout = default_layout(3, 4)
    img = rasterize(layout, np.zeros(12), RasterConfig())
    assert not img.pixels.any()


def test_rasterize_single_taxel_peak():
    # lone active taxel at (10, 10); brute-force scan locates the global max
    layout = TaxelLayout(ids=[0, 1], x_mm=[10.0, 25.0], y_mm=[10.0, 25.0],
                         pitch_mm=7.5)
    cfg = RasterConfig(step_mm=1.0)
    vals = np.array([1.0, 0.0])
    img = rasterize(layout, vals, cfg)
    oracle = brute_force_raster(layout, vals, cfg)
    r, c = np.unravel_index(np.argmax(oracle), oracle.shape)
    assert (r, c) == np.unravel_index(np.argmax(img.pixels), img.pixels.shape)
    x0, y0, _, _ = layout.bbox
    assert abs(x0 + c * 1.0 - 10.0) <= 0.5 and abs(y0 + r * 1.0 - 10.0) <= 0.5


def test_image_dims_match_bbox_invariant():
    # bbox 356 x 333 mm at 1 mm step gives the forearm-scale 357 x 334 grid
    layout = TaxelLayout(ids=[0, 1], x_mm=[0.0, 356.0], y_mm=[0.0, 333.0],
                         pitch_mm=7.5)
    h, w = layout.grid_shape(1.0)
    assert (w, h) == (357, 334)
    img = rasterize(layout, np.zeros(2), RasterConfig())
    assert (img.width, img.height) == (357, 334)

    desk = default_layout(16, 24, 7.5)
    h, w = desk.grid_shape(1.0)
    assert (h, w) == (math.ceil(112.5) + 1, math.ceil(176.25) + 1)


def test_default_layout_single():
    layout = default_layout(1, 1, 7.5)
    assert len(layout) == 1
    assert layout.x_mm[0] == 0.0 and layout.y_mm[0] == 0.0


def test_default_layout_hex_offsets():
    layout = default_layout(2, 2, 7.5)
    assert len(layout) == 4
    assert np.array_equal(layout.x_mm, [0.0, 7.5, 3.75, 11.25])
    assert np.array_equal(layout.y_mm, [0.0, 0.0, 7.5, 7.5])


def test_default_layout_desk_scale():
    layout = default_layout(16, 24, 7.5)
    assert len(layout) == 384
    x0, y0, x1, y1 = layout.bbox
    assert (x1 - x0, y1 - y0) == (176.25, 112.5)


def test_brute_force_equivalence():
    rng = np.random.default_rng(42)
    for n in (1, 5, 16):
        layout = small_random_layout(rng, n)
        cfg = RasterConfig(step_mm=1.0)
        h, w = layout.grid_shape(1.0)
        assert h <= 40 and w <= 40
        vals = rng.random(n)
        img = rasterize(layout, vals, cfg)
        oracle = brute_force_raster(layout, vals, cfg)
        assert np.abs(img.pixels - oracle).max() < 1e-12


def test_monotonicity():
    rng = np.random.default_rng(3)
    layout = small_random_layout(rng, 9)
    cfg = RasterConfig()
    vals = rng.random(9)
    base = rasterize(layout, vals, cfg).pixels
    for i in range(9):
        bumped = vals.copy()
        bumped[i] = min(1.0, bumped[i] + 0.3)
        up = rasterize(layout, bumped, cfg).pixels
        assert (up >= base - 1e-12).all()


def test_partition_of_unity():
    rng = np.random.default_rng(4)
    layout = small_random_layout(rng, 12)
    vals = rng.random(12)
    img = rasterize(layout, vals, RasterConfig())
    assert img.pixels.max() <= vals.max() + 1e-12
    assert img.pixels.min() >= 0.0


def test_rasterize_determinism():
    rng = np.random.default_rng(5)
    layout = default_layout(4, 5)
    vals = rng.random(20)
    a = rasterize(layout, vals, RasterConfig())
    b = rasterize(layout, vals, RasterConfig())
    assert np.array_equal(a.pixels, b.pixels)


def test_rasterize_input_validation():
    layout = default_layout(2, 2)
    with pytest.raises(ConfigError):
        rasterize(layout, np.zeros(3), RasterConfig())  # wrong length
    with pytest.raises(DataError):
        rasterize(layout, np.array([0.0, np.nan, 0.0, 0.0]), RasterConfig())
    with pytest.raises(ConfigError):
        rasterize(layout, np.array([0.0, 2.0, 0.0, 0.0]), RasterConfig())


def test_layout_validation():
    with pytest.raises(ConfigError):
        TaxelLayout(ids=[0, 0], x_mm=[0.0, 5.0], y_mm=[0.0, 0.0])  # dup ids
    with pytest.raises(ConfigError):
        TaxelLayout(ids=[0, 1], x_mm=[0.0, 0.05], y_mm=[0.0, 0.0])  # too close
    with pytest.raises(ConfigError):
        TaxelLayout(ids=[], x_mm=[], y_mm=[])
    with pytest.raises(ConfigError):
        TaxelLayout(ids=[0], x_mm=[np.inf], y_mm=[0.0])
    with pytest.raises(ConfigError):
        TaxelLayout(ids=[0], x_mm=[0.0], y_mm=[0.0], pitch_mm=0.0)
    with pytest.raises(ConfigError):
        default_layout(0, 3)


def test_frame_validation():
    with pytest.raises(DataError):
        TaxelFrame(values=np.array([-1.0]))
    with pytest.raises(DataError):
        TaxelFrame(values=np.array([70000.0]))
    with pytest.raises(DataError):
        TaxelFrame(values=np.array([np.nan]))


def test_config_validation():
    with pytest.raises(ConfigError):
        RasterConfig(step_mm=0.0)
    with pytest.raises(ConfigError):
        RasterConfig(kernel_sigma_mm=-1.0)
    with pytest.raises(ConfigError):
        RasterConfig(response_range=0.0)


def test_image_validation():
    with pytest.raises(DataError):
        TactileImage(pixels=np.array([[0.0, 1.5]]))
    with pytest.raises(DataError):
        TactileImage(pixels=np.array([[np.nan]]))


def test_layout_csv_round_trip(tmp_path):
    layout = default_layout(3, 3, 7.5)
    path = tmp_path / "layout.csv"
    layout.save_csv(path)
    loaded = TaxelLayout.load_csv(path, pitch_mm=7.5)
    assert np.array_equal(loaded.ids, layout.ids)
    assert np.array_equal(loaded.x_mm, layout.x_mm)
    assert np.array_equal(loaded.y_mm, layout.y_mm)


def test_pgm_render_of_image():
    img = TactileImage(pixels=np.array([[0.0, 1.0]]))
    assert img.to_pgm() == b"P5\n2 1\n255\n" + bytes([0, 255])
