"""Grayscale raster I/O (binary PGM) and gray-level quantization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_ORIGINAL = 256


class PGMError(ValueError):
    """Raised when a byte stream is not a usable 8-bit binary PGM."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale image; ``pixels`` is a (height, width) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise ValueError("pixels must be a non-empty 2-D array")
        if px.dtype != np.uint8:
            if px.min() < 0 or px.max() > 255:
                raise ValueError("pixel values must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_flat(cls, width: int, height: int, values) -> "GrayImage":
        arr = np.asarray(values, dtype=np.int64)
        if arr.size != width * height:
            raise ValueError("length(pixels) must equal width * height")
        return cls(arr.reshape(height, width))

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class QuantizedImage:
    """Image of gray levels in ``[1, levels]``, stored (height, width)."""

    pixels: np.ndarray
    levels: int

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("levels must be >= 2")
        px = np.ascontiguousarray(self.pixels, dtype=np.int32)
        if px.ndim != 2 or px.size == 0:
            raise ValueError("pixels must be a non-empty 2-D array")
        if px.min() < 1 or px.max() > self.levels:
            raise ValueError(f"gray levels must lie in [1, {self.levels}]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, QuantizedImage):
            return NotImplemented
        return self.levels == other.levels and np.array_equal(self.pixels, other.pixels)


def _skip_space(data: bytes, pos: int) -> int:
    while pos < len(data):
        c = data[pos]
        if c == ord("#"):
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
        elif chr(c).isspace():
            pos += 1
        else:
            break
    return pos


def _read_int(data: bytes, pos: int) -> tuple[int, int]:
    pos = _skip_space(data, pos)
    start = pos
    while pos < len(data) and 48 <= data[pos] <= 57:
        pos += 1
    if pos == start:
        raise PGMError("expected an unsigned integer in header", start)
    return int(data[start:pos]), pos


def read_pgm(data: bytes) -> GrayImage:
    """Decode a binary (P5) PGM stream with maxval <= 255."""
    if data[:2] != b"P5":
        raise PGMError("unsupported magic %r" % bytes(data[:2]), 0)
    pos = 2
    if pos >= len(data) or not chr(data[pos]).isspace() and data[pos] != ord("#"):
        raise PGMError("malformed header after magic", pos)
    width, pos = _read_int(data, pos)
    height, pos = _read_int(data, pos)
    maxval_at = _skip_space(data, pos)
    maxval, pos = _read_int(data, pos)
    if width < 1 or height < 1:
        raise PGMError("image dimensions must be positive", maxval_at)
    if maxval < 1 or maxval > 255:
        raise PGMError(f"maxval {maxval} not supported (must be 1..255)", maxval_at)
    if pos >= len(data) or not chr(data[pos]).isspace():
        raise PGMError("missing whitespace byte before payload", pos)
    pos += 1
    need = width * height
    if len(data) - pos < need:
        raise PGMError(f"truncated payload: need {need} bytes, have {len(data) - pos}", len(data))
    payload = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return GrayImage(payload.reshape(height, width).copy())


def write_pgm(image: GrayImage) -> bytes:
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.pixels.tobytes()


def load_pgm(path) -> GrayImage:
    with open(path, "rb") as fh:
        return read_pgm(fh.read())


def save_pgm(path, image: GrayImage) -> None:
    with open(path, "wb") as fh:
        fh.write(write_pgm(image))


def quantize(image: GrayImage, levels: int) -> QuantizedImage:
    """Scale 0..255 linearly onto gray levels 1..levels: floor(v * levels / 256) + 1."""
    if not 2 <= levels <= N_ORIGINAL:
        raise ValueError(f"levels must be in [2, {N_ORIGINAL}], got {levels}")
    v = image.pixels.astype(np.int32)
    return QuantizedImage(v * levels // N_ORIGINAL + 1, levels)
