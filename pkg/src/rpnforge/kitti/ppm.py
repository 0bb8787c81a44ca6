"""Binary PPM (P6, maxval 255) as the portable 8-bit RGB carrier."""

from __future__ import annotations

import numpy as np


def _read_token(data: bytes, off: int) -> tuple[bytes, int]:
    """Next header token, skipping whitespace and # comments."""
    n = len(data)
    while off < n:
        c = data[off : off + 1]
        if c == b"#":
            while off < n and data[off : off + 1] != b"\n":
                off += 1
        elif c.isspace():
            off += 1
        else:
            break
    start = off
    while off < n and not data[off : off + 1].isspace():
        off += 1
    if start == off:
        raise ValueError(f"malformed PPM header at byte {start}: expected a token")
    return data[start:off], off


def load_ppm(data: bytes) -> np.ndarray:
    """Decode P6 bytes into a uint8 [H, W, 3] array."""
    magic, off = _read_token(data, 0)
    if magic != b"P6":
        raise ValueError(f"bad PPM magic {magic!r} at byte 0, expected b'P6'")
    fields = []
    for _ in range(3):
        tok, off = _read_token(data, off)
        try:
            fields.append(int(tok))
        except ValueError:
            raise ValueError(f"non-numeric PPM header field {tok!r} at byte {off}") from None
    width, height, maxval = fields
    if maxval != 255:
        raise ValueError(f"unsupported PPM maxval {maxval}, only 255 is accepted")
    if width < 1 or height < 1:
        raise ValueError(f"bad PPM dimensions {width}x{height}")
    off += 1  # single whitespace byte after maxval
    expected = width * height * 3
    payload = data[off : off + expected]
    if len(payload) != expected:
        raise ValueError(
            f"truncated PPM payload at byte {off + len(payload)}: "
            f"need {expected} bytes, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy()


def save_ppm(image: np.ndarray) -> bytes:
    """Encode a uint8 [H, W, 3] array as canonical P6 bytes."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"image must be [H,W,3], got shape {img.shape}")
    if img.dtype != np.uint8:
        raise ValueError(f"image must be uint8, got {img.dtype}")
    h, w = img.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + img.tobytes()
