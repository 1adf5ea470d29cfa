"""Bit-exact file codecs: PGM/PPM renders, TFLO flow interchange, TXSQ samples.

All multi-byte integers and floats are little-endian. Encoders are pure
functions returning ``bytes`` so identical inputs produce identical files.
"""

import struct

import numpy as np

from .errors import DataError

TFLO_MAGIC = b"TFLO"
TXSQ_MAGIC = b"TXSQ"
TXSQ_VERSION = 1
TXSQ_DT_MS = 100


def quantize_u8(values):
    """Map [0,1] reals to 0..255 with round-half-up (pixel = round(v*255))."""
    v = np.asarray(values, dtype=np.float64)
    return np.floor(v * 255.0 + 0.5).clip(0, 255).astype(np.uint8)


def encode_pgm(pixels):
    """Encode a [0,1]-valued 2-D array as a binary PGM (P5, maxval 255)."""
    pix = np.asarray(pixels, dtype=np.float64)
    if pix.ndim != 2:
        raise DataError("PGM requires a 2-D array, got shape %r" % (pix.shape,))
    h, w = pix.shape
    header = ("P5\n%d %d\n255\n" % (w, h)).encode("ascii")
    return header + quantize_u8(pix).tobytes()


def encode_ppm(r, g, b):
    """Encode three [0,1]-valued channels as a binary PPM (P6, maxval 255)."""
    r = np.asarray(r, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not (r.shape == g.shape == b.shape) or r.ndim != 2:
        raise DataError("PPM channels must share one 2-D shape")
    h, w = r.shape
    header = ("P6\n%d %d\n255\n" % (w, h)).encode("ascii")
    rgb = np.stack([quantize_u8(r), quantize_u8(g), quantize_u8(b)], axis=-1)
    return header + rgb.tobytes()


def _parse_pnm_header(data, magic):
    if not data.startswith(magic):
        raise DataError("bad magic, expected %r" % magic)
    # Header tokens may be separated by any whitespace; '#' starts a comment.
    pos = len(magic)
    tokens = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError("truncated PNM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise DataError("only maxval 255 supported, got %d" % maxval)
    return w, h, pos


def decode_pgm(data):
    """Decode binary PGM bytes to a uint8 array of shape (h, w)."""
    w, h, pos = _parse_pnm_header(data, b"P5")
    raster = data[pos : pos + w * h]
    if len(raster) != w * h:
        raise DataError("PGM raster truncated")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def decode_ppm(data):
    """Decode binary PPM bytes to a uint8 array of shape (h, w, 3)."""
    w, h, pos = _parse_pnm_header(data, b"P6")
    raster = data[pos : pos + w * h * 3]
    if len(raster) != w * h * 3:
        raise DataError("PPM raster truncated")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).copy()


def encode_tflo(u, v):
    """Encode a flow field: TFLO magic, u32 width, u32 height, f32 u then v planes."""
    u = np.asarray(u, dtype=np.float32)
    v = np.asarray(v, dtype=np.float32)
    if u.shape != v.shape or u.ndim != 2:
        raise DataError("flow planes must share one 2-D shape")
    h, w = u.shape
    out = bytearray(TFLO_MAGIC)
    out += struct.pack("<II", w, h)
    out += u.astype("<f4").tobytes()
    out += v.astype("<f4").tobytes()
    return bytes(out)


def decode_tflo(data):
    """Decode TFLO bytes to (u, v) float32 arrays of shape (h, w)."""
    if not data.startswith(TFLO_MAGIC):
        raise DataError("bad TFLO magic")
    w, h = struct.unpack_from("<II", data, 4)
    need = 12 + 2 * 4 * w * h
    if len(data) < need:
        raise DataError("TFLO payload truncated")
    plane = w * h * 4
    u = np.frombuffer(data, dtype="<f4", count=w * h, offset=12).reshape(h, w)
    v = np.frombuffer(data, dtype="<f4", count=w * h, offset=12 + plane).reshape(h, w)
    return u.copy(), v.copy()


def encode_txsq(label, user_id, seed, frames):
    """Encode one gesture sample.

    Layout: magic, version u16, label u8, user_id u32, seed u64, n_taxels u32,
    n_frames u32, dt_ms u32, then n_frames x n_taxels little-endian f32.
    """
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim != 2:
        raise DataError("frames must be (n_frames, n_taxels)")
    n_frames, n_taxels = frames.shape
    out = bytearray(TXSQ_MAGIC)
    out += struct.pack("<HBIQIII", TXSQ_VERSION, label, user_id, seed,
                       n_taxels, n_frames, TXSQ_DT_MS)
    out += frames.astype("<f4").tobytes()
    return bytes(out)


def decode_txsq(data):
    """Decode TXSQ bytes to (label, user_id, seed, frames float32 (T, N))."""
    if not data.startswith(TXSQ_MAGIC):
        raise DataError("bad TXSQ magic")
    version, label, user_id, seed, n_taxels, n_frames, dt_ms = struct.unpack_from(
        "<HBIQIII", data, 4)
    if version != TXSQ_VERSION:
        raise DataError("unsupported TXSQ version %d" % version)
    if dt_ms != TXSQ_DT_MS:
        raise DataError("unexpected frame spacing %d ms" % dt_ms)
    header = 4 + struct.calcsize("<HBIQIII")
    count = n_frames * n_taxels
    if len(data) < header + 4 * count:
        raise DataError("TXSQ payload truncated")
    frames = np.frombuffer(data, dtype="<f4", count=count, offset=header)
    return label, user_id, seed, frames.reshape(n_frames, n_taxels).copy()


def encode_layout_csv(taxels):
    """Encode taxel positions as `id,x_mm,y_mm` CSV (UTF-8, LF endings)."""
    lines = ["id,x_mm,y_mm"]
    for tid, x, y in taxels:
        lines.append("%d,%s,%s" % (tid, repr(float(x)), repr(float(y))))
    return ("\n".join(lines) + "\n").encode("utf-8")


def decode_layout_csv(data):
    """Decode layout CSV bytes to a list of (id, x_mm, y_mm) tuples."""
    text = data.decode("utf-8")
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines or lines[0].strip() != "id,x_mm,y_mm":
        raise DataError("layout CSV must start with header 'id,x_mm,y_mm'")
    taxels = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 3:
            raise DataError("bad layout CSV row: %r" % ln)
        taxels.append((int(parts[0]), float(parts[1]), float(parts[2])))
    return taxels
