"""Bayer RAW containers and the packing / black-level / amplification /
upsampling chain that turns a sensor mosaic into model conditioning.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DimensionError(ValueError):
    pass


class ParameterError(ValueError):
    pass


class FormatError(ValueError):
    pass


class CFAPattern(enum.IntEnum):
    RGGB = 0
    BGGR = 1
    GRBG = 2
    GBRG = 3

    @classmethod
    def parse(cls, value) -> "CFAPattern":
        if isinstance(value, CFAPattern):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise ParameterError(f"unknown CFA pattern {value!r}") from None
        return cls(int(value))


CHANNELS = ("R", "Gr", "B", "Gb")

# (row, col) inside the 2x2 tile of each canonical channel R, Gr, B, Gb.
# Gr shares a row with red, Gb shares a row with blue.
_TILE_OFFSETS = {
    CFAPattern.RGGB: ((0, 0), (0, 1), (1, 1), (1, 0)),
    CFAPattern.BGGR: ((1, 1), (1, 0), (0, 0), (0, 1)),
    CFAPattern.GRBG: ((0, 1), (0, 0), (1, 0), (1, 1)),
    CFAPattern.GBRG: ((1, 0), (1, 1), (0, 1), (0, 0)),
}


def tile_offsets(pattern) -> tuple:
    """(row, col) of R, Gr, B, Gb within a 2x2 tile for ``pattern``."""
    return _TILE_OFFSETS[CFAPattern.parse(pattern)]


def color_index_map(pattern, height: int, width: int) -> np.ndarray:
    """Per-site color index (0=R, 1=G, 2=B) of a mosaic."""
    idx = np.empty((2, 2), dtype=np.int64)
    for ch, (r, c) in enumerate(tile_offsets(pattern)):
        idx[r, c] = (0, 1, 2, 1)[ch]
    return np.tile(idx, (height // 2, width // 2))


@dataclass
class BayerImage:
    """Single-channel CFA mosaic plus the sensor metadata needed to linearize it."""

    data: np.ndarray
    pattern: CFAPattern = CFAPattern.RGGB
    black_level: int = 512
    white_level: int = 16383
    exposure_s: float = 1.0
    iso: int = 100

    def __post_init__(self):
        self.data = np.asarray(self.data)
        self.pattern = CFAPattern.parse(self.pattern)
        if self.data.ndim != 2:
            raise DimensionError(f"mosaic must be 2-D, got shape {self.data.shape}")
        h, w = self.data.shape
        if h % 2 or w % 2 or h == 0 or w == 0:
            raise DimensionError(f"mosaic dimensions must be even and nonzero, got {h}x{w}")
        if not 0 <= self.black_level < self.white_level <= 0xFFFF:
            raise ParameterError(
                f"need 0 <= black_level < white_level <= 65535, got {self.black_level}, {self.white_level}"
            )
        if self.data.dtype != np.uint16:
            if np.any(self.data < 0) or np.any(self.data != np.round(self.data)):
                raise ParameterError("samples must be nonnegative integers")
            self.data = self.data.astype(np.uint16)
        if self.data.size and int(self.data.max()) > self.white_level:
            raise ParameterError(f"sample {int(self.data.max())} exceeds white level {self.white_level}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class PackedRaw:
    """Half-resolution 4-channel image, channels in R, Gr, B, Gb order.

    Straight out of :func:`pack_bayer` the values are raw DN; after
    :func:`normalize_amplify` they are linear and amplified by ``amplification``.
    """

    data: np.ndarray
    amplification: float = 1.0
    normalized: bool = False

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 4:
            raise DimensionError(f"packed data must be (h, w, 4), got {self.data.shape}")
        if np.any(self.data < 0):
            raise ParameterError("packed values must be nonnegative")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class LinearImage:
    data: np.ndarray
    colorspace: str = "linear"

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise DimensionError(f"image must be (h, w, c), got {self.data.shape}")
        if self.colorspace not in ("linear", "srgb"):
            raise ParameterError(f"colorspace must be 'linear' or 'srgb', got {self.colorspace!r}")
        if not np.all(np.isfinite(self.data)):
            raise ParameterError("image contains non-finite values")
        if self.colorspace == "srgb" and self.data.size and (self.data.min() < 0 or self.data.max() > 1):
            raise ParameterError("sRGB data must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def pack_bayer(img: BayerImage) -> PackedRaw:
    """Rearrange each 2x2 CFA tile into one pixel with 4 channels (R, Gr, B, Gb)."""
    data = img.data
    h, w = data.shape
    if h % 2 or w % 2:
        raise DimensionError(f"mosaic dimensions must be even, got {h}x{w}")
    planes = [data[r::2, c::2] for r, c in tile_offsets(img.pattern)]
    return PackedRaw(np.stack(planes, axis=-1).astype(np.float64))


def remosaic(packed: PackedRaw | np.ndarray, pattern=CFAPattern.RGGB, black_level: int = 0,
             white_level: int = 0xFFFF, exposure_s: float = 1.0, iso: int = 100) -> BayerImage:
    """Exact inverse of :func:`pack_bayer` for packed frames still holding raw DN."""
    data = packed.data if isinstance(packed, PackedRaw) else np.asarray(packed)
    if data.ndim != 3 or data.shape[2] != 4:
        raise DimensionError(f"packed data must be (h, w, 4), got {data.shape}")
    h, w, _ = data.shape
    out = np.empty((2 * h, 2 * w), dtype=np.uint16)
    for ch, (r, c) in enumerate(tile_offsets(pattern)):
        out[r::2, c::2] = data[..., ch]
    return BayerImage(out, pattern, black_level, white_level, exposure_s, iso)


def normalize_amplify(packed: PackedRaw, black_level: float, white_level: float, alpha: float) -> PackedRaw:
    """Subtract black level (clamped at 0), scale to [0, 1] of the sensor range, multiply by ``alpha``.

    No upper clamp: amplified values may exceed 1.
    """
    if not alpha > 0:
        raise ParameterError(f"amplification must be positive, got {alpha}")
    if not black_level < white_level:
        raise ParameterError(f"black level {black_level} must be below white level {white_level}")
    scaled = np.maximum(packed.data - black_level, 0.0) / float(white_level - black_level)
    return PackedRaw(alpha * scaled, amplification=float(alpha), normalized=True)


def cubic_kernel(x, a: float = -0.5):
    """Keys cubic convolution kernel; ``a=-0.5`` is Catmull-Rom."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def _resize_matrix(n_in: int, factor: int) -> np.ndarray:
    # Row i holds the taps for output sample i; out-of-range taps fold onto the edge.
    n_out = n_in * factor
    m = np.zeros((n_out, n_in))
    src = (np.arange(n_out) + 0.5) / factor - 0.5
    base = np.floor(src).astype(np.int64)
    for k in range(-1, 3):
        pos = base + k
        w = cubic_kernel(src - pos)
        np.add.at(m, (np.arange(n_out), np.clip(pos, 0, n_in - 1)), w)
    return m


def bicubic_upsample(packed: PackedRaw | np.ndarray, factor: int = 2) -> LinearImage:
    """Separable Catmull-Rom upsampling with half-pixel centers and edge clamping."""
    data = packed.data if isinstance(packed, PackedRaw) else np.asarray(packed, dtype=np.float64)
    if data.ndim != 3 or data.shape[0] == 0 or data.shape[1] == 0:
        raise DimensionError(f"cannot upsample array of shape {data.shape}")
    if int(factor) != factor or factor < 1:
        raise ParameterError(f"factor must be a positive integer, got {factor}")
    my = _resize_matrix(data.shape[0], int(factor))
    mx = _resize_matrix(data.shape[1], int(factor))
    out = np.einsum("yi,ijc,xj->yxc", my, data, mx, optimize=True)
    return LinearImage(out, "linear")


def preprocess(img: BayerImage, alpha: float) -> np.ndarray:
    """Full conditioning chain: pack, normalize + amplify, upsample back to (H, W, 4)."""
    packed = normalize_amplify(pack_bayer(img), img.black_level, img.white_level, alpha)
    return bicubic_upsample(packed, 2).data


# .braw container: little-endian header followed by row-major u16 samples.
_BRAW_MAGIC = b"BRAW"
_BRAW_VERSION = 1
_BRAW_HEADER = struct.Struct("<4sHIIBHHQI")


def write_braw(img: BayerImage, path) -> None:
    header = _BRAW_HEADER.pack(
        _BRAW_MAGIC, _BRAW_VERSION, img.width, img.height, int(img.pattern),
        int(img.black_level), int(img.white_level), int(round(img.exposure_s * 1e6)), int(img.iso),
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(img.data, dtype="<u2").tobytes())


def read_braw(path) -> BayerImage:
    raw = Path(path).read_bytes()
    if len(raw) < _BRAW_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, width, height, pattern, black, white, exp_us, iso = _BRAW_HEADER.unpack_from(raw)
    if magic != _BRAW_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _BRAW_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    n = width * height
    payload = raw[_BRAW_HEADER.size:]
    if len(payload) != 2 * n:
        raise FormatError(f"{path}: expected {2 * n} sample bytes, found {len(payload)}")
    data = np.frombuffer(payload, dtype="<u2").reshape(height, width).astype(np.uint16)
    return BayerImage(data, CFAPattern(pattern), black, white, exp_us / 1e6, iso)
