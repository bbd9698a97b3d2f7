#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Binary codecs: UMOT tensor files and binary PGM (P5) images.

UMOT layout: magic bytes `UMOT`, unsigned 32-bit rank, `rank` unsigned
32-bit dims, then row-major little-endian 32-bit floats.

see copyright/license in README.md
"""

import pathlib
import re
import struct

import numpy as np

from .errors import FormatError

UMOT_MAGIC: bytes = b"UMOT"

PAT_PGM_HEADER: re.Pattern[bytes] = re.compile(
    rb"^P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s"
)


def encode_tensor(
    array: np.ndarray,
) -> bytes:
    """
    Encode an array as UMOT bytes; values are stored as 32-bit floats.
    """
    arr: np.ndarray = np.array(array, dtype="<f4", order="C")
    header: bytes = UMOT_MAGIC + struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes(order="C")


def decode_tensor(
    blob: bytes,
    *,
    source: str = "<bytes>",
) -> np.ndarray:
    """
    Decode UMOT bytes into a `float32` array, rejecting malformed input.
    """
    if len(blob) < 8 or blob[:4] != UMOT_MAGIC:
        raise FormatError(f"{source}: not a UMOT tensor (bad magic bytes)")

    rank: int = struct.unpack_from("<I", blob, 4)[0]
    head_len: int = 8 + 4 * rank

    if len(blob) < head_len:
        raise FormatError(f"{source}: truncated UMOT header (rank {rank})")

    dims: tuple[int, ...] = struct.unpack_from(f"<{rank}I", blob, 8)

    if any(d <= 0 for d in dims):
        raise FormatError(f"{source}: UMOT dims must be positive, got {dims}")

    count: int = int(np.prod(dims)) if rank > 0 else 1
    expected: int = head_len + 4 * count

    if len(blob) != expected:
        raise FormatError(f"{source}: UMOT payload is {len(blob) - head_len} bytes, expected {4 * count}")

    data: np.ndarray = np.frombuffer(blob, dtype="<f4", count=count, offset=head_len)
    return data.reshape(dims).astype(np.float32)


def save_tensor(
    array: np.ndarray,
    path: pathlib.Path,
) -> None:
    """
    Write one tensor to a UMOT file.
    """
    pathlib.Path(path).write_bytes(encode_tensor(array))


def load_tensor(
    path: pathlib.Path,
) -> np.ndarray:
    """
    Read one tensor from a UMOT file.
    """
    file_path: pathlib.Path = pathlib.Path(path)

    if not file_path.is_file():
        raise FormatError(f"missing tensor file: {file_path}")

    return decode_tensor(file_path.read_bytes(), source=str(file_path))


######################################################################
# PGM images


def encode_pgm(
    image: np.ndarray,
) -> bytes:
    """
    Encode a 2-D image in [0,1] as binary 8-bit PGM (P5); pixels are
    clamped to [0,1] then rounded from `255 * pixel`.
    """
    if image.ndim != 2:
        raise FormatError(f"PGM export expects a 2-D image, got shape {image.shape}")

    height, width = image.shape
    gray: np.ndarray = np.round(255.0 * np.clip(image.astype(np.float64), 0.0, 1.0)).astype(np.uint8)
    return f"P5\n{width} {height}\n255\n".encode("ascii") + gray.tobytes(order="C")


def decode_pgm(
    blob: bytes,
    *,
    source: str = "<bytes>",
) -> np.ndarray:
    """
    Decode a binary PGM (P5) with maxval < 256 into a `uint8` array.
    """
    hit: re.Match[bytes] | None = PAT_PGM_HEADER.match(blob)

    if hit is None:
        raise FormatError(f"{source}: not a binary PGM (P5)")

    width, height, maxval = (int(group) for group in hit.groups())

    if not 0 < maxval < 256:
        raise FormatError(f"{source}: unsupported PGM maxval {maxval}")

    payload: bytes = blob[hit.end():]

    if len(payload) != width * height:
        raise FormatError(f"{source}: PGM payload is {len(payload)} bytes, expected {width * height}")

    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def save_pgm(
    image: np.ndarray,
    path: pathlib.Path,
) -> None:
    """
    Write one grayscale image as a PGM file.
    """
    pathlib.Path(path).write_bytes(encode_pgm(image))
