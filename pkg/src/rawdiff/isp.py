"""Classical reference pipeline: white balance, bilinear demosaic, color matrix, sRGB gamma.

Denoising and sharpening are deliberately left out so the output is a plain
rendering of the sensor data.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import convolve

from .raw import (
    BayerImage, CFAPattern, DimensionError, FormatError, LinearImage, ParameterError, color_index_map,
)


@dataclass
class IspConfig:
    wb_gains: tuple = (1.0, 1.0, 1.0)
    ccm: np.ndarray = field(default_factory=lambda: np.eye(3))
    gamma: str | float = "srgb"

    def __post_init__(self):
        self.wb_gains = tuple(float(g) for g in self.wb_gains)
        _check_gains(self.wb_gains)
        self.ccm = _check_ccm(self.ccm)
        if isinstance(self.gamma, str):
            if self.gamma != "srgb":
                raise ParameterError(f"gamma must be 'srgb' or a positive number, got {self.gamma!r}")
        elif not float(self.gamma) > 0:
            raise ParameterError(f"gamma exponent must be positive, got {self.gamma}")


def _check_gains(gains):
    if len(gains) != 3:
        raise ParameterError(f"need three white-balance gains, got {len(gains)}")
    if not all(np.isfinite(g) and g > 0 for g in gains):
        raise ParameterError(f"white-balance gains must be positive, got {tuple(gains)}")


def _check_ccm(ccm) -> np.ndarray:
    m = np.asarray(ccm, dtype=np.float64)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise ParameterError(f"color matrix must be a finite 3x3 array, got shape {m.shape}")
    if np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-6):
        raise ParameterError(f"color matrix rows must sum to 1, got {m.sum(axis=1)}")
    return m


def white_balance(img, gains, pattern=None):
    """Multiply every sample by the gain of its color.

    Accepts a LinearImage (3 channels), a BayerImage (gain applied above black
    level, rounded and clipped at white level) or a float 2-D mosaic together
    with its ``pattern``.
    """
    gains = tuple(float(g) for g in gains)
    _check_gains(gains)
    g = np.asarray(gains)
    if isinstance(img, LinearImage):
        if img.channels != 3:
            raise DimensionError(f"white balance needs 3 channels, got {img.channels}")
        return LinearImage(img.data * g, img.colorspace)
    if isinstance(img, BayerImage):
        gmap = g[color_index_map(img.pattern, img.height, img.width)]
        sig = (img.data.astype(np.float64) - img.black_level) * gmap + img.black_level
        out = np.clip(np.round(sig), 0, img.white_level).astype(np.uint16)
        return BayerImage(out, img.pattern, img.black_level, img.white_level, img.exposure_s, img.iso)
    mosaic = np.asarray(img, dtype=np.float64)
    if pattern is None or mosaic.ndim != 2:
        raise ParameterError("a bare mosaic needs a 2-D array and its CFA pattern")
    return mosaic * g[color_index_map(pattern, *mosaic.shape)]


def normalize_mosaic(img: BayerImage) -> np.ndarray:
    """Black-subtracted mosaic scaled to [0, 1] of the sensor range."""
    return np.maximum(img.data.astype(np.float64) - img.black_level, 0.0) / (img.white_level - img.black_level)


_K_RB = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=np.float64) / 4
_K_G = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]], dtype=np.float64) / 4


def demosaic_bilinear(img, normalized: bool = True, pattern=None) -> LinearImage:
    """Bilinear demosaic by normalized convolution.

    Missing samples are the average of the nearest same-color sites; at the
    frame border only in-frame neighbors are averaged. ``img`` is a BayerImage
    (normalized to [0, 1] when ``normalized``) or a float mosaic plus ``pattern``.
    """
    if isinstance(img, BayerImage):
        pattern = img.pattern
        mosaic = normalize_mosaic(img) if normalized else img.data.astype(np.float64)
    else:
        mosaic = np.asarray(img, dtype=np.float64)
        if pattern is None:
            raise ParameterError("a bare mosaic needs its CFA pattern")
    if mosaic.ndim != 2 or mosaic.shape[0] % 2 or mosaic.shape[1] % 2:
        raise DimensionError(f"mosaic must be 2-D with even dimensions, got {mosaic.shape}")
    cidx = color_index_map(CFAPattern.parse(pattern), *mosaic.shape)
    out = np.empty(mosaic.shape + (3,))
    for c, kernel in ((0, _K_RB), (1, _K_G), (2, _K_RB)):
        mask = (cidx == c).astype(np.float64)
        num = convolve(mosaic * mask, kernel, mode="constant")
        den = convolve(mask, kernel, mode="constant")
        out[..., c] = np.where(mask > 0, mosaic, num / den)
    return LinearImage(out, "linear")


def apply_ccm(img: LinearImage, ccm) -> LinearImage:
    m = _check_ccm(ccm)
    if img.channels != 3:
        raise DimensionError(f"color matrix needs 3 channels, got {img.channels}")
    return LinearImage(img.data @ m.T, img.colorspace)


def srgb_encode(x):
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1 / 2.4) - 0.055)


def srgb_decode(y):
    y = np.asarray(y, dtype=np.float64)
    return np.where(y <= 0.04045, y / 12.92, np.power((y + 0.055) / 1.055, 2.4))


def gamma_srgb(img: LinearImage, direction: str = "encode", gamma="srgb") -> LinearImage:
    """Standard sRGB transfer curve, or a plain power law when ``gamma`` is a number."""
    if direction == "encode":
        if gamma == "srgb":
            data = srgb_encode(img.data)
        else:
            data = np.power(np.clip(img.data, 0.0, 1.0), 1.0 / float(gamma))
        return LinearImage(data, "srgb")
    if direction == "decode":
        data = srgb_decode(img.data) if gamma == "srgb" else np.power(img.data, float(gamma))
        return LinearImage(data, "linear")
    raise ParameterError(f"direction must be 'encode' or 'decode', got {direction!r}")


def run_pipeline(img: BayerImage, cfg: IspConfig | None = None, exposure_scale: float = 1.0) -> LinearImage:
    """normalize -> exposure scale -> WB -> demosaic -> CCM -> clip -> gamma."""
    cfg = cfg or IspConfig()
    if not exposure_scale > 0:
        raise ParameterError(f"exposure scale must be positive, got {exposure_scale}")
    mosaic = normalize_mosaic(img) * exposure_scale
    mosaic = white_balance(mosaic, cfg.wb_gains, img.pattern)
    rgb = demosaic_bilinear(mosaic, pattern=img.pattern)
    rgb = apply_ccm(rgb, cfg.ccm)
    rgb = LinearImage(np.clip(rgb.data, 0.0, 1.0))
    return gamma_srgb(rgb, "encode", cfg.gamma)


def write_ppm(img, path) -> None:
    """Binary P6, 8 bits per channel. Accepts a LinearImage or an (h, w, 3) array in [0, 1]."""
    data = img.data if isinstance(img, LinearImage) else np.asarray(img)
    if data.ndim != 3 or data.shape[2] != 3:
        raise DimensionError(f"PPM needs (h, w, 3) data, got {data.shape}")
    q = np.round(np.clip(data, 0.0, 1.0) * 255).astype(np.uint8)
    h, w, _ = q.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(q.tobytes())


def read_ppm(path) -> LinearImage:
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos)
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PPM header")
        tokens.append(raw[start:pos])
    if tokens[0] != b"P6" or int(tokens[3]) != 255:
        raise FormatError(f"{path}: only 8-bit P6 is supported")
    w, h = int(tokens[1]), int(tokens[2])
    body = raw[pos + 1:pos + 1 + w * h * 3]
    if len(body) != w * h * 3:
        raise FormatError(f"{path}: truncated pixel data")
    data = np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).astype(np.float64) / 255.0
    return LinearImage(data, "srgb")
