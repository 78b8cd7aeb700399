"""Image representation, PPM I/O, resizing, and label-preserving augmentation.

Pixels live as float32 in [0, 1], (height, width, 3) row-major; disk form
is 8-bit binary PPM.  Every transform clamps back into [0, 1].  Random
augmentation is a pure function of (config seed, sample index).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np


class ImageFormatError(ValueError):
    pass


@dataclass
class Image:
    pixels: np.ndarray  # (h, w, 3) float32 in [0, 1]

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ImageFormatError(f"expected (h, w, 3) pixels, got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ImageFormatError(f"image dimensions must be >= 1, got {arr.shape}")
        self.pixels = arr

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def channels(self):
        return 3

    def copy(self):
        return Image(self.pixels.copy())


def _clamp(pixels):
    return np.clip(pixels, 0.0, 1.0)


# ---------------------------------------------------------------- PPM I/O

def encode_ppm(img: Image) -> bytes:
    # canonical header so identical pixels always give identical bytes
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    data = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    return header + data.tobytes()


def decode_ppm(blob: bytes) -> Image:
    stream = io.BytesIO(blob)
    magic = _ppm_token(stream)
    if magic != b"P6":
        raise ImageFormatError(f"not a binary PPM (magic {magic!r})")
    try:
        width = int(_ppm_token(stream))
        height = int(_ppm_token(stream))
        maxval = int(_ppm_token(stream))
    except ValueError as exc:
        raise ImageFormatError(f"bad PPM header: {exc}") from exc
    if maxval != 255:
        raise ImageFormatError(f"only 8-bit PPM supported, maxval {maxval}")
    if width < 1 or height < 1:
        raise ImageFormatError(f"bad PPM dimensions {width}x{height}")
    raw = stream.read(width * height * 3)
    if len(raw) != width * height * 3:
        raise ImageFormatError("truncated PPM pixel data")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return Image(arr.astype(np.float32) / 255.0)


def _ppm_token(stream) -> bytes:
    # whitespace-separated token, skipping '#' comments per the PPM spec
    token = b""
    while True:
        ch = stream.read(1)
        if not ch:
            if token:
                return token
            raise ImageFormatError("truncated PPM header")
        if ch == b"#":
            while ch and ch != b"\n":
                ch = stream.read(1)
            continue
        if ch.isspace():
            if token:
                return token
            continue
        token += ch


def write_ppm(img: Image, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(img))


def read_ppm(path) -> Image:
    with open(path, "rb") as fh:
        return decode_ppm(fh.read())


# ------------------------------------------------------------- transforms

def flip_y(img: Image) -> Image:
    """Mirror across the vertical axis (column order reversed per row)."""
    return Image(np.ascontiguousarray(img.pixels[:, ::-1, :]))


def rotate_small(img: Image, angle: float) -> Image:
    """Rotate about the image center; bilinear sampling, edge replication."""
    if abs(angle) > 45:
        raise ValueError(f"|angle| must be <= 45 degrees, got {angle}")
    if angle == 0:
        return img.copy()
    h, w = img.height, img.width
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(angle)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    # inverse map: output pixel -> source location rotated by -angle
    dy = rows - cy
    dx = cols - cx
    src_r = cos_t * dy + sin_t * dx + cy
    src_c = -sin_t * dy + cos_t * dx + cx
    return Image(_sample_bilinear(img.pixels, src_r, src_c))


def _sample_bilinear(pixels, src_r, src_c):
    h, w = pixels.shape[:2]
    src_r = np.clip(src_r, 0, h - 1)
    src_c = np.clip(src_c, 0, w - 1)
    r0 = np.floor(src_r).astype(np.int64)
    c0 = np.floor(src_c).astype(np.int64)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (src_r - r0).astype(np.float32)[..., None]
    fc = (src_c - c0).astype(np.float32)[..., None]
    top = pixels[r0, c0] * (1 - fc) + pixels[r0, c1] * fc
    bottom = pixels[r1, c0] * (1 - fc) + pixels[r1, c1] * fc
    return _clamp(top * (1 - fr) + bottom * fr)


def adjust_brightness(img: Image, factor: float) -> Image:
    if factor <= 0:
        raise ValueError(f"brightness factor must be > 0, got {factor}")
    return Image(_clamp(img.pixels * np.float32(factor)))


def adjust_color(img: Image, gains) -> Image:
    gains = np.asarray(gains, dtype=np.float32)
    if gains.shape != (3,):
        raise ValueError(f"expected 3 channel gains, got shape {gains.shape}")
    if np.any(gains <= 0):
        raise ValueError(f"channel gains must be > 0, got {gains.tolist()}")
    return Image(_clamp(img.pixels * gains))


def resize_bilinear(img: Image, target_h: int, target_w: int) -> Image:
    if target_h < 1 or target_w < 1:
        raise ValueError(f"target size must be >= 1, got {target_h}x{target_w}")
    if target_h == img.height and target_w == img.width:
        return img.copy()
    # half-pixel-centered sampling
    src_r = (np.arange(target_h) + 0.5) * (img.height / target_h) - 0.5
    src_c = (np.arange(target_w) + 0.5) * (img.width / target_w) - 0.5
    grid_r, grid_c = np.meshgrid(src_r, src_c, indexing="ij")
    return Image(_sample_bilinear(img.pixels, grid_r, grid_c))


# ------------------------------------------------------------ augmentation

@dataclass
class AugmentationConfig:
    flip_probability: float = 0.5
    max_rotation: float = 10.0
    brightness_range: tuple = (0.8, 1.2)
    color_gain_range: tuple = (0.9, 1.1)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError(f"flip_probability must be in [0,1], got {self.flip_probability}")
        if not 0.0 <= self.max_rotation <= 45.0:
            raise ValueError(f"max_rotation must be in [0,45], got {self.max_rotation}")
        for name in ("brightness_range", "color_gain_range"):
            lo, hi = getattr(self, name)
            if not (lo <= 1.0 <= hi):
                raise ValueError(f"{name} must contain 1.0, got ({lo}, {hi})")
            if lo <= 0:
                raise ValueError(f"{name} lower bound must be > 0, got {lo}")


def augment(img: Image, cfg: AugmentationConfig, sample_index: int) -> Image:
    """Apply flip -> rotate -> brightness -> color with draws keyed by
    (cfg.seed, sample_index); identical keys replay byte-identically."""
    rng = np.random.Generator(np.random.Philox(key=[cfg.seed, sample_index]))
    do_flip = rng.random() < cfg.flip_probability
    angle = rng.uniform(-cfg.max_rotation, cfg.max_rotation)
    brightness = rng.uniform(*cfg.brightness_range)
    gains = rng.uniform(cfg.color_gain_range[0], cfg.color_gain_range[1], size=3)

    out = flip_y(img) if do_flip else img.copy()
    out = rotate_small(out, angle)
    out = adjust_brightness(out, brightness)
    out = adjust_color(out, gains)
    return out
