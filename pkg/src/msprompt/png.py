"""Minimal deterministic PNG writer for 8-bit RGB images.

Output is fixed by construction: IHDR, one IDAT, IEND; filter type 0 on
every scanline; zlib at its default level; no ancillary chunks.
"""

import struct
import zlib

import numpy as np

SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _chunk(kind: bytes, data: bytes) -> bytes:
    crc = zlib.crc32(data, zlib.crc32(kind)) & 0xFFFFFFFF
    return struct.pack(">I", len(data)) + kind + data + struct.pack(">I", crc)


def encode_rgb(pixels: np.ndarray) -> bytes:
    """Encode an ``(H, W, 3)`` uint8 array as a truecolor PNG."""
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8 or pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) uint8 pixels, got {pixels.dtype} {pixels.shape}")
    height, width = pixels.shape[:2]
    # bit depth 8, color type 2 (truecolor), deflate, adaptive filtering family, no interlace
    header = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    rows = np.zeros((height, 1 + 3 * width), dtype=np.uint8)
    rows[:, 1:] = pixels.reshape(height, 3 * width)
    return b"".join([
        SIGNATURE,
        _chunk(b"IHDR", header),
        _chunk(b"IDAT", zlib.compress(rows.tobytes())),
        _chunk(b"IEND", b""),
    ])


def chunk_types(data: bytes) -> list[bytes]:
    """List chunk types in a PNG stream; used to audit encoder output."""
    if not data.startswith(SIGNATURE):
        raise ValueError("not a PNG stream")
    types = []
    pos = len(SIGNATURE)
    while pos < len(data):
        (length,) = struct.unpack(">I", data[pos:pos + 4])
        types.append(data[pos + 4:pos + 8])
        pos += 12 + length
    return types
