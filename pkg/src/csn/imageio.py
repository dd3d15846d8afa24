"""Slice image formats.

Two formats carry the 2-D slices:

* 16-bit binary PGM ("P5", maxval 65535). Values map to [0, 1] by division
  by the maxval; writing quantizes with round-half-even. Samples are two
  bytes, most significant byte first, per the Netpbm convention.
* "F32I", a raw float format: one ASCII header line ``F32I <H> <W>\\n``
  followed by H*W little-endian 32-bit floats, row-major.

Readers return float64 2-D arrays and fail loudly, reporting the byte
offset of the problem.
"""

from __future__ import annotations

import numpy as np

PGM_MAXVAL = 65535


def _pgm_header(data):
    """Collect the four header tokens, skipping '#' comments; returns
    (tokens, offset just past the last token)."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ValueError(f"malformed PGM header at byte offset {pos}")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def _read_pgm(data):
    tokens, pos = _pgm_header(data)
    if tokens[0] != b"P5":
        raise ValueError(f"not a binary PGM (expected 'P5' at byte offset 0, got {tokens[0]!r})")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise ValueError(f"malformed PGM header at byte offset {pos}") from exc
    if maxval != PGM_MAXVAL:
        raise ValueError(f"unsupported PGM maxval {maxval}, expected {PGM_MAXVAL}")
    start = pos + 1  # single whitespace byte after maxval
    need = h * w * 2
    if len(data) - start < need:
        raise ValueError(f"truncated PGM data at byte offset {len(data)} "
                         f"(expected {start + need} bytes)")
    raw = np.frombuffer(data, dtype=">u2", count=h * w, offset=start)
    return raw.reshape(h, w).astype(np.float64) / PGM_MAXVAL


def _read_f32i(data):
    nl = data.find(b"\n")
    if nl < 0:
        raise ValueError("malformed F32I header at byte offset 0 (no newline)")
    parts = data[:nl].split()
    if len(parts) != 3 or parts[0] != b"F32I":
        raise ValueError(f"malformed F32I header at byte offset 0: {data[:nl]!r}")
    try:
        h, w = int(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ValueError(f"malformed F32I header at byte offset 0: {data[:nl]!r}") from exc
    start = nl + 1
    need = h * w * 4
    if len(data) - start < need:
        raise ValueError(f"truncated F32I data at byte offset {len(data)} "
                         f"(expected {start + need} bytes)")
    raw = np.frombuffer(data, dtype="<f4", count=h * w, offset=start)
    return raw.reshape(h, w).astype(np.float64)


def read_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"P5":
        return _read_pgm(data)
    if data[:4] == b"F32I":
        return _read_f32i(data)
    raise ValueError(f"{path}: unrecognized image format (magic {data[:4]!r})")


def write_image(img, path):
    """Write by extension: .pgm quantizes to 16 bit, .f32 stores raw floats."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"can only write 2-D images, got shape {img.shape}")
    path = str(path)
    if path.endswith(".pgm"):
        h, w = img.shape
        q = np.rint(np.clip(img, 0.0, 1.0) * PGM_MAXVAL).astype(">u2")
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n{PGM_MAXVAL}\n".encode())
            fh.write(q.tobytes())
    elif path.endswith(".f32"):
        h, w = img.shape
        with open(path, "wb") as fh:
            fh.write(f"F32I {h} {w}\n".encode())
            fh.write(img.astype("<f4").tobytes())
    else:
        raise ValueError(f"{path}: unsupported output extension (use .pgm or .f32)")
