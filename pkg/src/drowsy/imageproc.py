"""Pixel-level preprocessing for eye crops.

Everything here works on 8-bit images held in numpy arrays and is a pure
function of its inputs. Wherever a pixel value is produced from a real
number it is rounded half-up in integer arithmetic, so results are
bit-exact across platforms.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

EYE_SIZE = 24


class PgmError(ValueError):
    """Malformed PGM/PPM data. ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class InvalidRoiError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-channel 8-bit image; ``pixels`` has shape (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"gray image needs a non-empty 2-D array, got shape {px.shape}")
        if px.dtype != np.uint8:
            if np.any((px < 0) | (px > 255)) or not np.all(np.equal(np.mod(px, 1), 0)):
                raise ValueError("gray intensities must be integers in [0, 255]")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_bytes(cls, width: int, height: int, data: bytes) -> "GrayImage":
        if len(data) != width * height:
            raise ValueError(f"expected {width * height} bytes, got {len(data)}")
        return cls(np.frombuffer(data, dtype=np.uint8).reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def data(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __repr__(self):
        return f"GrayImage({self.width}x{self.height})"


@dataclass(frozen=True, eq=False)
class RgbImage:
    """Interleaved 8-bit RGB image; ``pixels`` has shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"rgb image needs shape (h, w, 3), got {px.shape}")
        px = np.ascontiguousarray(px, dtype=np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, RgbImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))


@dataclass(frozen=True)
class CropBox:
    """Axis-aligned box in pixel units, top-left corner (x0, y0).

    A box fresh from landmark geometry may extend past the frame; call
    :meth:`clamp` before handing it to :func:`crop`.
    """

    x0: int
    y0: int
    w: int
    h: int

    @property
    def x1(self) -> int:
        return self.x0 + self.w

    @property
    def y1(self) -> int:
        return self.y0 + self.h

    def clamp(self, width: int, height: int) -> "CropBox":
        x0, y0 = max(self.x0, 0), max(self.y0, 0)
        x1, y1 = min(self.x1, width), min(self.y1, height)
        if x1 <= x0 or y1 <= y0:
            raise InvalidRoiError(f"{self} has no overlap with a {width}x{height} frame")
        return CropBox(x0, y0, x1 - x0, y1 - y0)


def to_grayscale(img: RgbImage) -> GrayImage:
    """BT.601 luma, computed in integer arithmetic so rounding is exact."""
    px = img.pixels.astype(np.int64)
    luma = (299 * px[..., 0] + 587 * px[..., 1] + 114 * px[..., 2] + 500) // 1000
    return GrayImage(np.clip(luma, 0, 255).astype(np.uint8))


def equalize_histogram(img: GrayImage) -> GrayImage:
    """Classical 256-bin CDF equalization.

    ``out(v) = round((cdf(v) - cdf_min) / (N - cdf_min) * 255)`` where
    ``cdf_min`` is the smallest nonzero CDF value. A constant image has
    ``cdf_min == N`` and is returned unchanged.
    """
    n = img.pixels.size
    hist = np.bincount(img.pixels.ravel(), minlength=256).astype(np.int64)
    cdf = np.cumsum(hist)
    cdf_min = int(cdf[np.flatnonzero(hist)[0]])
    if cdf_min == n:
        return img
    denom = n - cdf_min
    # round-half-up of num/denom*255, exact in integers
    num = np.maximum(cdf - cdf_min, 0) * 255
    lut = (2 * num + denom) // (2 * denom)
    return GrayImage(lut.astype(np.uint8)[img.pixels])


def crop(img: GrayImage | RgbImage, box: CropBox):
    if box.w < 1 or box.h < 1:
        raise InvalidRoiError(f"zero-area crop box {box}")
    if box.x0 < 0 or box.y0 < 0 or box.x1 > img.width or box.y1 > img.height:
        raise InvalidRoiError(f"{box} exceeds {img.width}x{img.height} image; clamp it first")
    return type(img)(img.pixels[box.y0:box.y1, box.x0:box.x1])


def _sample_positions(n_in: int, n_out: int):
    """Corner-aligned source positions as exact rationals lo + num/den."""
    den = max(n_out - 1, 1)
    scaled = np.arange(n_out, dtype=np.int64) * (n_in - 1 if n_out > 1 else 0)
    lo, num = scaled // den, scaled % den
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, num, den


def resize_bilinear(img: GrayImage, out_w: int, out_h: int) -> GrayImage:
    """Corner-aligned bilinear resampling (output corners hit input corners).

    Interpolation weights are rationals with denominator (out - 1), so the
    whole computation stays in integers and rounds half-up exactly.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    if (out_w, out_h) == (img.width, img.height):
        return img
    src = img.pixels.astype(np.int64)
    x_lo, x_hi, x_num, x_den = _sample_positions(img.width, out_w)
    y_lo, y_hi, y_num, y_den = _sample_positions(img.height, out_h)
    rows = src[y_lo] * (y_den - y_num)[:, None] + src[y_hi] * y_num[:, None]
    acc = rows[:, x_lo] * (x_den - x_num) + rows[:, x_hi] * x_num
    den = x_den * y_den
    out = (2 * acc + den) // (2 * den)
    return GrayImage(np.clip(out, 0, 255).astype(np.uint8))


def normalize_eye(img: GrayImage, size: int = EYE_SIZE) -> np.ndarray:
    """Equalize, resize to ``size`` x ``size`` and scale into [0, 1] as float32."""
    eq = resize_bilinear(equalize_histogram(img), size, size)
    return eq.pixels.astype(np.float32) / np.float32(255.0)


# --- Netpbm I/O -----------------------------------------------------------

_TOKEN = re.compile(rb"\S+")


def _read_header(data: bytes, magic: bytes):
    """Parse ``magic width height maxval`` plus the single whitespace byte.

    Returns (width, height, payload_offset).
    """
    if data[:2] != magic:
        raise PgmError(f"bad magic {data[:2]!r}, expected {magic!r}", 0)
    pos = 2
    fields = []
    while len(fields) < 3:
        # skip whitespace and comments
        while pos < len(data):
            c = data[pos:pos + 1]
            if c.isspace():
                pos += 1
            elif c == b"#":
                nl = data.find(b"\n", pos)
                pos = len(data) if nl < 0 else nl + 1
            else:
                break
        m = _TOKEN.match(data, pos)
        if m is None:
            raise PgmError("truncated header", pos)
        tok = m.group()
        if b"#" in tok:
            tok = tok.split(b"#", 1)[0]
        if not tok.isdigit():
            raise PgmError(f"non-numeric header field {tok!r}", pos)
        fields.append((int(tok), pos))
        pos += len(tok)
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise PgmError("missing whitespace after maxval", pos)
    (width, wpos), (height, hpos), (maxval, mpos) = fields
    if width < 1:
        raise PgmError("width must be positive", wpos)
    if height < 1:
        raise PgmError("height must be positive", hpos)
    if maxval != 255:
        raise PgmError(f"maxval {maxval} unsupported, only 255", mpos)
    return width, height, pos + 1


def read_pgm(data: bytes) -> GrayImage:
    """Decode a binary (P5) PGM with maxval 255."""
    width, height, start = _read_header(data, b"P5")
    need = width * height
    if len(data) - start < need:
        raise PgmError(f"truncated payload: need {need} bytes, have {len(data) - start}", len(data))
    return GrayImage.from_bytes(width, height, data[start:start + need])


def write_pgm(img: GrayImage) -> bytes:
    return b"P5\n%d %d\n255\n" % (img.width, img.height) + img.pixels.tobytes()


def read_ppm(data: bytes) -> RgbImage:
    """Decode a binary (P6) PPM with maxval 255."""
    width, height, start = _read_header(data, b"P6")
    need = 3 * width * height
    if len(data) - start < need:
        raise PgmError(f"truncated payload: need {need} bytes, have {len(data) - start}", len(data))
    px = np.frombuffer(data[start:start + need], dtype=np.uint8).reshape(height, width, 3)
    return RgbImage(px)


def write_ppm(img: RgbImage) -> bytes:
    return b"P6\n%d %d\n255\n" % (img.width, img.height) + img.pixels.tobytes()


def read_netpbm(data: bytes) -> GrayImage | RgbImage:
    """Read either P5 or P6, dispatching on the magic number."""
    if data[:2] == b"P6":
        return read_ppm(data)
    return read_pgm(data)
