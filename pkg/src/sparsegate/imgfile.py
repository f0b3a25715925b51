"""Readers/writers for depth images: 16-bit PGM (millimeters) and float PFM.

PGM files store depth in millimeters as 16-bit grayscale; reading converts
to meters. PFM stores 32-bit floats (meters) with the usual bottom-up row
order and a scale/endianness token.
"""

from __future__ import annotations

import re

import numpy as np

PGM_MM_PER_METER = 1000.0


def _read_header_tokens(f, count: int) -> list[bytes]:
    """Read whitespace-separated header tokens, skipping '#' comments."""
    tokens: list[bytes] = []
    while len(tokens) < count:
        line = f.readline()
        if not line:
            raise ValueError(f"truncated header at byte offset {f.tell()}")
        line = line.split(b"#", 1)[0]
        tokens.extend(line.split())
    return tokens


def read_pgm(path: str) -> np.ndarray:
    """Read a binary (P5) 16-bit PGM depth image; returns meters, float64."""
    with open(path, "rb") as f:
        magic, w, h, maxval = _read_header_tokens(f, 4)
        if magic != b"P5":
            raise ValueError(f"not a binary PGM (magic {magic!r} at byte offset 0)")
        width, height, maxval = int(w), int(h), int(maxval)
        if maxval <= 255 or maxval > 65535:
            raise ValueError(f"expected 16-bit PGM, maxval={maxval}")
        raw = f.read(width * height * 2)
        if len(raw) != width * height * 2:
            raise ValueError(f"truncated pixel data at byte offset {f.tell()}")
    img = np.frombuffer(raw, dtype=">u2").reshape(height, width)
    return img.astype(np.float64) / PGM_MM_PER_METER


def write_pgm(path: str, img_meters: np.ndarray) -> None:
    """Write depth in meters as 16-bit big-endian binary PGM (millimeters)."""
    mm = np.clip(np.round(np.asarray(img_meters) * PGM_MM_PER_METER), 0, 65535)
    data = mm.astype(">u2")
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n# depth in millimeters\n{w} {h}\n65535\n".encode())
        f.write(data.tobytes())


def read_pfm(path: str) -> np.ndarray:
    """Read a single-channel (Pf) PFM; returns float32, top-down rows."""
    with open(path, "rb") as f:
        header = f.readline().rstrip()
        if header not in (b"Pf", b"PF"):
            raise ValueError(f"not a PFM file (magic {header!r} at byte offset 0)")
        if header == b"PF":
            raise ValueError("3-channel PFM not supported for depth")
        dims = f.readline().decode("ascii")
        m = re.match(r"^\s*(\d+)\s+(\d+)\s*$", dims)
        if m is None:
            raise ValueError(f"malformed PFM dimension line at byte offset {f.tell()}")
        width, height = int(m.group(1)), int(m.group(2))
        scale = float(f.readline().decode("ascii"))
        endian = "<" if scale < 0 else ">"
        raw = f.read(width * height * 4)
        if len(raw) != width * height * 4:
            raise ValueError(f"truncated pixel data at byte offset {f.tell()}")
    img = np.frombuffer(raw, dtype=endian + "f4").reshape(height, width)
    return np.flipud(img).copy()  # PFM rows are bottom-up


def write_pfm(path: str, img: np.ndarray) -> None:
    """Write a single-channel little-endian PFM (top-down array in)."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 2:
        raise ValueError("expected a 2-D single-channel image")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode())
        f.write(np.flipud(img).astype("<f4").tobytes())
