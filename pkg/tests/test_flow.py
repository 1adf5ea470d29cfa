import numpy as np
import pytest

from tactiflow import ConfigError, DataError, FlowConfig, FlowField, farneback_flow
from tactiflow.flow import (_poly_kernels, flow_from_expansions,
                            flow_single_level, poly_expand, pyramid_expansions)

INTERIOR = 9  # default window_size; test masks stay this far from borders


def cutoff_blob_field(xx, yy, centers, sigmas, amps, cut=3.0):
    """Sum of truncated Gaussian blobs; background is exactly zero, like
    rasterized tactile images."""
    out = np.zeros_like(xx)
    for (cx, cy), s, a in zip(centers, sigmas, amps):
        d2 = (xx - cx) ** 2 + (yy - cy) ** 2
        g = a * np.exp(-d2 / (2.0 * s * s))
        g[d2 > (cut * s) ** 2] = 0.0
        out += g
    return np.clip(out, 0.0, 1.0)


def random_texture(size, n_blobs, sig_lo, sig_hi, seed):
    h = w = size
    yy, xx = np.indices((h, w), dtype=float)
    rng = np.random.default_rng(seed)
    centers = np.column_stack([rng.uniform(10, w - 10, n_blobs),
                               rng.uniform(10, h - 10, n_blobs)])
    sigmas = rng.uniform(sig_lo, sig_hi, n_blobs)
    amps = rng.uniform(0.6, 1.0, n_blobs)
    return (xx, yy), (centers, sigmas, amps)


def support_mask(img, margin, thr=0.05):
    m = img > thr
    m[:margin, :] = m[-margin:, :] = False
    m[:, :margin] = m[:, -margin:] = False
    return m


def zero_flow(shape):
    return FlowField(u=np.zeros(shape), v=np.zeros(shape))


# ---------------------------------------------------------------- expansion

def brute_force_expansion(img, poly_n, poly_sigma, r, c):
    """Independent per-pixel weighted least squares over the truncated window."""
    h, w = img.shape
    m = poly_n // 2
    g = _poly_kernels(poly_n, poly_sigma)[0]
    rows_phi, weights, targets = [], [], []
    for wy in range(-m, m + 1):
        for wx in range(-m, m + 1):
            if 0 <= r + wy < h and 0 <= c + wx < w:
                rows_phi.append([1.0, wx, wy, wx * wx, wy * wy, wx * wy])
                weights.append(g[wx + m] * g[wy + m])
                targets.append(img[r + wy, c + wx])
    phi = np.array(rows_phi)
    wgt = np.array(weights)
    f = np.array(targets)
    lhs = phi.T @ (phi * wgt[:, None])
    rhs = phi.T @ (wgt * f)
    return np.linalg.solve(lhs, rhs)


def test_poly_expand_constant():
    img = np.full((20, 24), 0.7)
    e = poly_expand(img, 5, 1.1)
    # constants are in the basis span, so the fit is exact even at borders
    assert np.abs(e.c - 0.7).max() < 1e-12
    assert np.abs(e.b).max() < 1e-12
    assert np.abs(e.A).max() < 1e-12


def test_poly_expand_linear_ramp():
    yy, xx = np.indices((20, 24), dtype=float)
    e = poly_expand(2.0 * xx, 5, 1.1)
    interior = (slice(5, -5), slice(5, -5))
    assert np.abs(e.b[interior][..., 0] - 2.0).max() < 1e-6
    assert np.abs(e.b[interior][..., 1]).max() < 1e-6
    assert np.abs(e.A[interior]).max() < 1e-6


def test_poly_expand_pure_quadratic():
    yy, xx = np.indices((20, 24), dtype=float)
    e = poly_expand(xx ** 2, 5, 1.1)
    interior = (slice(5, -5), slice(5, -5))
    assert np.abs(e.A[interior][..., 0, 0] - 1.0).max() < 1e-6


def test_poly_expand_cross_term():
    yy, xx = np.indices((22, 22), dtype=float)
    e = poly_expand((xx - 10) * (yy - 10), 5, 1.1)
    interior = (slice(5, -5), slice(5, -5))
    assert np.abs(e.A[interior][..., 0, 1] - 0.5).max() < 1e-6


def test_poly_expand_matches_brute_force_wls():
    rng = np.random.default_rng(8)
    img = rng.random((16, 19))
    e = poly_expand(img, 5, 1.1)
    # corners and edges exercise the truncated-window renormalization
    for (r, c) in [(0, 0), (0, 18), (15, 0), (15, 18), (1, 9), (8, 0), (8, 9)]:
        ref = brute_force_expansion(img, 5, 1.1, r, c)
        assert e.c[r, c] == pytest.approx(ref[0], abs=1e-9)
        assert e.b[r, c, 0] == pytest.approx(ref[1], abs=1e-9)
        assert e.b[r, c, 1] == pytest.approx(ref[2], abs=1e-9)
        assert e.A[r, c, 0, 0] == pytest.approx(ref[3], abs=1e-9)
        assert e.A[r, c, 1, 1] == pytest.approx(ref[4], abs=1e-9)
        assert e.A[r, c, 0, 1] == pytest.approx(ref[5] / 2.0, abs=1e-9)


def test_poly_expand_symmetry_of_A():
    rng = np.random.default_rng(9)
    e = poly_expand(rng.random((12, 12)), 5, 1.1)
    assert np.array_equal(e.A[:, :, 0, 1], e.A[:, :, 1, 0])
    assert np.isfinite(e.A).all() and np.isfinite(e.b).all() and np.isfinite(e.c).all()


def test_poly_expand_too_small():
    with pytest.raises(ConfigError):
        poly_expand(np.zeros((4, 10)), 5, 1.1)


# ------------------------------------------------------------- single level

def test_single_level_identical_expansions_zero_flow():
    rng = np.random.default_rng(10)
    img = rng.random((30, 33))
    cfg = FlowConfig()
    e = poly_expand(img, cfg.poly_n, cfg.poly_sigma)
    f = flow_single_level(e, e, zero_flow(img.shape), cfg)
    assert max(np.abs(f.u).max(), np.abs(f.v).max()) < 1e-9


def test_single_level_translation_recovery():
    (xx, yy), blobs = random_texture(64, 18, 2.5, 4.5, seed=2)
    prev = cutoff_blob_field(xx, yy, *blobs)
    curr = cutoff_blob_field(xx - 2.0, yy, *blobs)
    cfg = FlowConfig(window_size=11, iterations=6)
    ep = poly_expand(prev, cfg.poly_n, cfg.poly_sigma)
    ec = poly_expand(curr, cfg.poly_n, cfg.poly_sigma)
    f = flow_single_level(ep, ec, zero_flow(prev.shape), cfg)
    m = support_mask(prev, cfg.window_size)
    epe = np.hypot(f.u - 2.0, f.v)[m]
    assert epe.mean() < 0.25
    assert f.u[m].mean() == pytest.approx(2.0, abs=0.2)
    assert abs(f.v[m].mean()) < 0.1


def test_single_level_rotation_recovery():
    (xx, yy), blobs = random_texture(64, 18, 2.5, 4.5, seed=4)
    prev = cutoff_blob_field(xx, yy, *blobs)
    ang = np.deg2rad(5.0)
    ca, sa = np.cos(ang), np.sin(ang)
    cy = cx = (64 - 1) / 2.0
    # current frame samples the continuous field at inversely rotated points
    rx = ca * (xx - cx) + sa * (yy - cy) + cx
    ry = -sa * (xx - cx) + ca * (yy - cy) + cy
    curr = cutoff_blob_field(rx, ry, *blobs)
    gtu = (ca * (xx - cx) - sa * (yy - cy) + cx) - xx
    gtv = (sa * (xx - cx) + ca * (yy - cy) + cy) - yy
    cfg = FlowConfig(window_size=11, iterations=6)
    ep = poly_expand(prev, cfg.poly_n, cfg.poly_sigma)
    ec = poly_expand(curr, cfg.poly_n, cfg.poly_sigma)
    f = flow_single_level(ep, ec, zero_flow(prev.shape), cfg)
    m = support_mask(prev, cfg.window_size)
    epe = np.hypot(f.u - gtu, f.v - gtv)[m]
    assert epe.mean() < 0.4


def test_single_level_dimension_mismatch():
    cfg = FlowConfig()
    e1 = poly_expand(np.zeros((10, 10)), 5, 1.1)
    e2 = poly_expand(np.zeros((10, 12)), 5, 1.1)
    with pytest.raises(ConfigError):
        flow_single_level(e1, e2, zero_flow((10, 10)), cfg)
    with pytest.raises(ConfigError):
        flow_single_level(e1, e1, zero_flow((12, 10)), cfg)


# ------------------------------------------------------------------ pyramid

def test_farneback_zero_images():
    z = np.zeros((40, 48))
    f = farneback_flow(z, z, FlowConfig())
    assert not f.u.any() and not f.v.any()


def test_farneback_zero_motion_random_images():
    rng = np.random.default_rng(11)
    for _ in range(10):
        img = rng.random((36, 44))
        f = farneback_flow(img, img, FlowConfig())
        assert max(np.abs(f.u).max(), np.abs(f.v).max()) < 1e-6


def test_farneback_shifted_blob_pair():
    (xx, yy), blobs = random_texture(72, 16, 3.0, 5.0, seed=6)
    prev = cutoff_blob_field(xx, yy, *blobs)
    curr = cutoff_blob_field(xx - 3.0, yy - 1.0, *blobs)
    f = farneback_flow(prev, curr, FlowConfig())
    m = support_mask(prev, INTERIOR)
    epe = np.hypot(f.u - 3.0, f.v - 1.0)[m]
    assert epe.mean() < 0.3


def test_farneback_integer_shift_battery():
    cfg = FlowConfig()
    shifts = [(4, 0), (0, 4), (2, 2), (-3, 2), (1, -4), (-2, -2)]
    for i, (dx, dy) in enumerate(shifts):
        (xx, yy), blobs = random_texture(80, 22, 3.0, 5.0, seed=20 + i)
        big = cutoff_blob_field(xx, yy, *blobs)
        prev = big[8:72, 8:72]
        curr = cutoff_blob_field(xx - dx, yy - dy, *blobs)[8:72, 8:72]
        f = farneback_flow(prev, curr, cfg)
        m = support_mask(prev, INTERIOR)
        assert m.mean() >= 0.25
        epe = np.hypot(f.u - dx, f.v - dy)[m]
        assert epe.mean() < 0.25, (dx, dy, epe.mean())


def test_farneback_appearing_blob_is_finite():
    (xx, yy), blobs = random_texture(48, 8, 3.0, 5.0, seed=7)
    blob = cutoff_blob_field(xx, yy, *blobs)
    f = farneback_flow(np.zeros_like(blob), blob, FlowConfig())
    assert np.isfinite(f.u).all() and np.isfinite(f.v).all()


def test_farneback_flip_equivariance():
    # 65 stays odd down the pyramid (65 -> 33 -> 17): resampling is symmetric
    (xx, yy), blobs = random_texture(65, 14, 2.5, 4.5, seed=3)
    prev = cutoff_blob_field(xx, yy, *blobs)
    curr = cutoff_blob_field(xx - 2.0, yy - 1.0, *blobs)
    cfg = FlowConfig()
    f = farneback_flow(prev, curr, cfg)
    ff = farneback_flow(prev[:, ::-1], curr[:, ::-1], cfg)
    assert np.abs(ff.u[:, ::-1] + f.u).max() < 1e-6
    assert np.abs(ff.v[:, ::-1] - f.v).max() < 1e-6


def test_farneback_determinism():
    rng = np.random.default_rng(12)
    a, b = rng.random((2, 40, 40))
    f1 = farneback_flow(a, b, FlowConfig())
    f2 = farneback_flow(a, b, FlowConfig())
    assert np.array_equal(f1.u, f2.u) and np.array_equal(f1.v, f2.v)


def test_farneback_input_validation():
    cfg = FlowConfig()
    with pytest.raises(ConfigError):
        farneback_flow(np.zeros((20, 20)), np.zeros((20, 24)), cfg)
    with pytest.raises(ConfigError):
        farneback_flow(np.zeros((8, 8)), np.zeros((8, 8)), cfg)  # coarsest < poly_n
    with pytest.raises(DataError):
        farneback_flow(np.full((30, 30), np.nan), np.zeros((30, 30)), cfg)


def test_flow_from_expansions_matches_farneback():
    rng = np.random.default_rng(13)
    a, b = rng.random((2, 40, 44))
    cfg = FlowConfig()
    f1 = farneback_flow(a, b, cfg)
    f2 = flow_from_expansions(pyramid_expansions(a, cfg),
                              pyramid_expansions(b, cfg), cfg)
    assert np.array_equal(f1.u, f2.u) and np.array_equal(f1.v, f2.v)


def test_flow_config_validation():
    with pytest.raises(ConfigError):
        FlowConfig(window_size=8)
    with pytest.raises(ConfigError):
        FlowConfig(poly_n=2)
    with pytest.raises(ConfigError):
        FlowConfig(pyramid_levels=0)
    with pytest.raises(ConfigError):
        FlowConfig(pyramid_scale=1.0)
    with pytest.raises(ConfigError):
        FlowConfig(iterations=0)


def test_flowfield_tflo_round_trip():
    rng = np.random.default_rng(14)
    f = FlowField(u=rng.standard_normal((9, 7)), v=rng.standard_normal((9, 7)))
    g = FlowField.from_tflo(f.to_tflo())
    assert np.array_equal(g.u, f.u.astype(np.float32).astype(np.float64))
    assert g.u.shape == (9, 7)


def test_flowfield_rejects_nonfinite():
    with pytest.raises(DataError):
        FlowField(u=np.array([[np.inf]]), v=np.array([[0.0]]))
