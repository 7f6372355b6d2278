"""8-bit binary PGM (P5) reading and writing."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("PGM images are 2-D")
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes())


def _tokens(buf: bytes):
    """Yield (token, end offset) for whitespace-separated header fields, skipping comments."""
    i = 0
    while True:
        while i < len(buf) and buf[i : i + 1].isspace():
            i += 1
        if buf[i : i + 1] == b"#":
            while i < len(buf) and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(buf) and not buf[j : j + 1].isspace():
            j += 1
        yield buf[i:j], j
        i = j


def read_pgm(path: str | Path) -> np.ndarray:
    """Load a P5 image normalized to [0, 1] float64."""
    buf = Path(path).read_bytes()
    toks = _tokens(buf)
    magic, _ = next(toks)
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    try:
        w, _ = next(toks)
        h, _ = next(toks)
        maxval, end = next(toks)
        w, h, maxval = int(w), int(h), int(maxval)
    except (StopIteration, ValueError):
        raise ValueError(f"{path}: malformed PGM header") from None
    if not 0 < maxval < 256:
        raise ValueError(f"{path}: only 8-bit PGM supported")
    pixels = buf[end + 1 : end + 1 + w * h]
    if len(pixels) != w * h:
        raise ValueError(f"{path}: truncated pixel data")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w).astype(np.float64) / maxval
