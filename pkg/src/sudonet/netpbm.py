"""Binary PGM (P5) and PPM (P6) reading and writing, maxval <= 255."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class NetpbmError(ValueError):
    pass


def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping # comments."""
    out, pos, n = [], 0, len(data)
    while len(out) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise NetpbmError("truncated header")
        out.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    if pos >= n or not data[pos : pos + 1].isspace():
        raise NetpbmError("missing whitespace after header")
    return out, pos + 1


def decode(data: bytes) -> np.ndarray:
    """Decode P5 to an (H, W) uint8 array or P6 to an (H, W, 3) uint8 array."""
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise NetpbmError(f"unsupported netpbm magic {magic!r} (need P5 or P6)")
    try:
        (w, h, maxval), pos = _tokens(data[2:], 3)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise NetpbmError(f"malformed header: {exc}") from exc
    if w < 1 or h < 1:
        raise NetpbmError(f"bad image size {w}x{h}")
    if not 1 <= maxval <= 255:
        raise NetpbmError(f"only 8-bit rasters are supported, maxval={maxval}")
    channels = 3 if magic == b"P6" else 1
    raster = data[2 + pos :]
    need = w * h * channels
    if len(raster) < need:
        raise NetpbmError(f"truncated raster: {len(raster)} of {need} bytes")
    img = np.frombuffer(raster, dtype=np.uint8, count=need)
    img = img.reshape((h, w, 3) if channels == 3 else (h, w))
    if maxval != 255:
        img = np.floor(img.astype(np.float64) * 255.0 / maxval + 0.5).astype(np.uint8)
    return img.copy()


def encode(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise NetpbmError(f"expected uint8 pixels, got {img.dtype}")
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise NetpbmError(f"cannot encode array of shape {img.shape}")
    h, w = img.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode() + np.ascontiguousarray(img).tobytes()


def read(path: str | Path) -> np.ndarray:
    return decode(Path(path).read_bytes())


def write(path: str | Path, img: np.ndarray) -> None:
    Path(path).write_bytes(encode(img))
