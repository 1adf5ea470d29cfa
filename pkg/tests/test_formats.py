import numpy as np
import pytest

from tactiflow import formats
from tactiflow.errors import DataError


def test_pgm_golden_bytes():
    img = np.array([[0.0, 1.0], [0.5, 0.25]])
    data = formats.encode_pgm(img)
    # round(0.5*255) = 128 (half-up), round(0.25*255) = 64
    assert data == b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64])


def test_pgm_round_trip():
    rng = np.random.default_rng(0)
    img = rng.random((7, 11))
    decoded = formats.decode_pgm(formats.encode_pgm(img))
    assert decoded.shape == (7, 11)
    assert np.array_equal(decoded, formats.quantize_u8(img))
    # re-encoding the decoded levels is lossless
    again = formats.decode_pgm(formats.encode_pgm(decoded / 255.0))
    assert np.array_equal(decoded, again)


def test_ppm_round_trip():
    rng = np.random.default_rng(1)
    r, g, b = rng.random((3, 5, 4))
    arr = formats.decode_ppm(formats.encode_ppm(r, g, b))
    assert arr.shape == (5, 4, 3)
    assert np.array_equal(arr[:, :, 0], formats.quantize_u8(r))
    assert np.array_equal(arr[:, :, 2], formats.quantize_u8(b))


def test_pnm_header_with_comment():
    data = b"P5\n# a comment\n3 2\n255\n" + bytes(6)
    img = formats.decode_pgm(data)
    assert img.shape == (2, 3)


def test_pgm_errors():
    with pytest.raises(DataError):
        formats.decode_pgm(b"P6\n1 1\n255\n\x00")
    with pytest.raises(DataError):
        formats.decode_pgm(b"P5\n4 4\n255\n\x00\x00")  # truncated raster
    with pytest.raises(DataError):
        formats.decode_pgm(b"P5\n2 2\n65535\n" + bytes(8))


def test_tflo_round_trip():
    rng = np.random.default_rng(2)
    u = rng.standard_normal((6, 9)).astype(np.float32)
    v = rng.standard_normal((6, 9)).astype(np.float32)
    data = formats.encode_tflo(u, v)
    assert data[:4] == b"TFLO"
    u2, v2 = formats.decode_tflo(data)
    assert np.array_equal(u, u2) and np.array_equal(v, v2)


def test_tflo_errors():
    with pytest.raises(DataError):
        formats.decode_tflo(b"FLOW" + bytes(20))
    good = formats.encode_tflo(np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(DataError):
        formats.decode_tflo(good[:-4])


def test_txsq_round_trip():
    frames = np.arange(12, dtype=np.float32).reshape(3, 4) * 7.5
    data = formats.encode_txsq(3, 17, 987654321, frames)
    assert data[:4] == b"TXSQ"
    label, user, seed, mat = formats.decode_txsq(data)
    assert (label, user, seed) == (3, 17, 987654321)
    assert np.array_equal(mat, frames)


def test_txsq_errors():
    good = formats.encode_txsq(0, 0, 0, np.zeros((2, 3), dtype=np.float32))
    with pytest.raises(DataError):
        formats.decode_txsq(b"XXXX" + good[4:])
    with pytest.raises(DataError):
        formats.decode_txsq(good[:-5])


def test_layout_csv_round_trip():
    taxels = [(0, 0.0, 0.0), (1, 3.75, 7.5), (2, -1.25, 0.1)]
    data = formats.encode_layout_csv(taxels)
    assert data.startswith(b"id,x_mm,y_mm\n")
    assert b"\r" not in data
    assert formats.decode_layout_csv(data) == taxels


def test_layout_csv_errors():
    with pytest.raises(DataError):
        formats.decode_layout_csv(b"x,y\n1,2\n")
    with pytest.raises(DataError):
        formats.decode_layout_csv(b"id,x_mm,y_mm\n1,2\n")
