"""Minimal binary PGM (P5) / PPM (P6) reader and writer.

Images are float arrays in [0, 1]: ``(h, w)`` for gray, ``(h, w, 3)`` for RGB.
"""

from __future__ import annotations

import os

import numpy as np


class PNMError(ValueError):
    pass


def _tokens(buf: bytes, count: int):
    """Pull ``count`` header tokens, skipping '#' comments; return tokens and
    the offset of the single whitespace byte that ends the header."""
    out = []
    i = 0
    n = len(buf)
    while len(out) < count:
        while i < n and buf[i : i + 1].isspace():
            i += 1
        if i < n and buf[i : i + 1] == b"#":
            while i < n and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not buf[j : j + 1].isspace() and buf[j : j + 1] != b"#":
            j += 1
        if j == i:
            raise PNMError("truncated header")
        out.append(buf[i:j])
        i = j
    return out, i


def read_pnm(path) -> np.ndarray:
    with open(path, "rb") as f:
        buf = f.read()
    toks, end = _tokens(buf, 4)
    magic = toks[0]
    if magic not in (b"P5", b"P6"):
        raise PNMError(f"{path}: unsupported magic {magic!r}")
    try:
        w, h, maxval = (int(t) for t in toks[1:])
    except ValueError as e:
        raise PNMError(f"{path}: bad header") from e
    if not (0 < maxval < 65536):
        raise PNMError(f"{path}: bad maxval {maxval}")
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    nbytes = w * h * channels * dtype.itemsize
    data = buf[end + 1 : end + 1 + nbytes]
    if len(data) != nbytes:
        raise PNMError(f"{path}: expected {nbytes} data bytes, got {len(data)}")
    arr = np.frombuffer(data, dtype=dtype).astype(float) / maxval
    shape = (h, w, 3) if channels == 3 else (h, w)
    return arr.reshape(shape)


def _write(path, magic: bytes, img: np.ndarray):
    img = np.asarray(img, dtype=float)
    h, w = img.shape[:2]
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(b"%s\n%d %d\n255\n" % (magic, w, h))
        f.write(data.tobytes())
    os.replace(tmp, path)


def write_pgm(path, img: np.ndarray):
    img = np.asarray(img)
    if img.ndim != 2:
        raise PNMError("PGM needs a single-channel image")
    _write(path, b"P5", img)


def write_ppm(path, img: np.ndarray):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise PNMError("PPM needs an (h, w, 3) image")
    _write(path, b"P6", img)
