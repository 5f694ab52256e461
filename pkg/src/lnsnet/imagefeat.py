"""Image loading, per-pixel input features and the Sobel contour prior."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CorruptImage, ImageNotFound, InvalidArgument, UnsupportedFormat

COLOR_SPACES = ("lab", "rgb")

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

# sRGB (D65) -> XYZ
_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_D65_WHITE = _RGB_TO_XYZ.sum(axis=1)

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)


@dataclass
class FeatureImage:
    """Input features ``[5,H,W]`` (3 color + p_x + p_y, all in [0,1]) and contour map."""

    features: np.ndarray
    contour: np.ndarray | None = None
    color_space: str = "lab"

    @property
    def height(self) -> int:
        return self.features.shape[1]

    @property
    def width(self) -> int:
        return self.features.shape[2]


def _read_ppm_token(data: bytes, pos: int):
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise CorruptImage("truncated PPM header")
    return data[start:pos], pos


def decode_ppm(data: bytes) -> np.ndarray:
    """Decode a binary (P6) PPM with maxval <= 255."""
    if data[:2] != b"P6":
        raise UnsupportedFormat("not a binary P6 PPM")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_ppm_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise CorruptImage(f"bad PPM header field {tok!r}") from None
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise CorruptImage(f"bad PPM dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise UnsupportedFormat(f"PPM maxval {maxval} is not 8-bit")
    pos += 1  # single whitespace before the raster
    need = width * height * 3
    raster = data[pos:pos + need]
    if len(raster) < need:
        raise CorruptImage(f"PPM raster truncated: {len(raster)} of {need} bytes")
    img = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    if maxval != 255:
        img = np.round(img.astype(np.float64) * (255.0 / maxval)).astype(np.uint8)
    return img.copy()


def _decode_png(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I", "F"):
                raise UnsupportedFormat(f"PNG mode {mode} is not 8-bit")
            if mode != "RGB":
                im = im.convert("RGB")
            return np.asarray(im, dtype=np.uint8).copy()
    except UnsupportedFormat:
        raise
    except (OSError, SyntaxError, ValueError, UnidentifiedImageError) as exc:
        raise CorruptImage(f"cannot decode PNG {path}: {exc}") from exc


def load_image(path) -> np.ndarray:
    """Read an 8-bit PNG or P6 PPM into an ``H x W x 3`` uint8 raster.

    Grayscale and palette PNGs are expanded to three channels and alpha is
    dropped.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise ImageNotFound(f"no such image: {path}")
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(PNG_MAGIC):
        return _decode_png(path)
    if head[:2] == b"P6":
        with open(path, "rb") as fh:
            return decode_ppm(fh.read())
    raise UnsupportedFormat(f"{path}: only PNG and binary PPM (P6) are supported")


def save_png(path, raster) -> None:
    Image.fromarray(np.asarray(raster, dtype=np.uint8), mode="RGB").save(path)


def srgb_to_lab(raster) -> np.ndarray:
    """CIELAB (D65) of an sRGB raster with values in 0..255."""
    c = np.asarray(raster, dtype=np.float64) / 255.0
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _RGB_TO_XYZ.T / _D65_WHITE
    delta = 6.0 / 29.0
    f = np.where(xyz > delta**3, np.cbrt(xyz), xyz / (3 * delta**2) + 4.0 / 29.0)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def position_channels(h: int, w: int) -> np.ndarray:
    px = np.arange(w, dtype=np.float64) / (w - 1) if w > 1 else np.zeros(w)
    py = np.arange(h, dtype=np.float64) / (h - 1) if h > 1 else np.zeros(h)
    return np.stack([np.broadcast_to(px[None, :], (h, w)), np.broadcast_to(py[:, None], (h, w))])


def build_features(raster, color_space: str = "lab") -> FeatureImage:
    raster = np.asarray(raster)
    if raster.ndim != 3 or raster.shape[2] != 3:
        raise InvalidArgument(f"raster must be H x W x 3, got shape {raster.shape}")
    if color_space not in COLOR_SPACES:
        raise InvalidArgument(f"unknown color space {color_space!r}")
    h, w, _ = raster.shape
    if color_space == "lab":
        lab = srgb_to_lab(raster)
        color = np.stack([lab[..., 0] / 100.0, (lab[..., 1] + 128.0) / 255.0,
                          (lab[..., 2] + 128.0) / 255.0])
    else:
        color = np.moveaxis(raster.astype(np.float64) / 255.0, 2, 0)
    color = np.clip(color, 0.0, 1.0)
    features = np.concatenate([color, position_channels(h, w)])
    return FeatureImage(features=features, color_space=color_space)


def sobel_contour(raster) -> np.ndarray:
    """Min-max normalized Sobel gradient magnitude of luma; replicate-padded."""
    r = np.asarray(raster, dtype=np.float64)
    luma = 0.299 * r[..., 0] + 0.587 * r[..., 1] + 0.114 * r[..., 2]
    h, w = luma.shape
    lp = np.pad(luma, 1, mode="edge")
    gx = np.zeros((h, w))
    gy = np.zeros((h, w))
    for ky in range(3):
        for kx in range(3):
            win = lp[ky:ky + h, kx:kx + w]
            gx += _SOBEL_X[ky, kx] * win
            gy += _SOBEL_X[kx, ky] * win
    mag = np.hypot(gx, gy)
    lo, hi = mag.min(), mag.max()
    if hi - lo <= 1e-12 * max(1.0, hi):
        return np.zeros((h, w))
    return (mag - lo) / (hi - lo)


def prepare_image(raster, color_space: str = "lab", with_contour: bool = True) -> FeatureImage:
    img = build_features(raster, color_space)
    if with_contour:
        img.contour = sobel_contour(raster)
    return img
