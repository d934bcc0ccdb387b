"""Tiny binary PGM (P5) reader and writer for dumping matrices as
grayscale images."""

from __future__ import annotations

import numpy as np


def write_pgm(path, img):
    """Write a float or int matrix as 8-bit binary PGM, rescaling the
    value range to 0..255 (a constant matrix maps to 0)."""
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError("expected a 2-d array")
    lo, hi = img.min(), img.max()
    scaled = np.zeros(img.shape) if hi == lo else (img - lo) / (hi - lo)
    data = np.round(255.0 * scaled).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        f.write(data.tobytes())


def read_pgm(path):
    """Read an 8-bit binary PGM written by write_pgm.  Returns a uint8
    matrix."""
    with open(path, "rb") as f:
        raw = f.read()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5" or len(parts) != 4:
        raise ValueError("not a binary PGM file")
    width, height = (int(t) for t in parts[1].split())
    if int(parts[2]) != 255:
        raise ValueError("only 8-bit PGM supported")
    data = np.frombuffer(parts[3][:width * height], dtype=np.uint8)
    return data.reshape(height, width).copy()
