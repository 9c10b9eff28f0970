"""Grayscale image container, file I/O and pixel-space error measures."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

# BT.601 luminance weights used for every RGB input.
_LUMA_R = 0.299
_LUMA_G = 0.587
_LUMA_B = 0.114

_ALLOWED_FORMATS = ("PNG", "PPM", "JPEG")

#: File extensions picked up by directory scans.
IMAGE_EXTENSIONS = (".png", ".pgm", ".ppm", ".jpg", ".jpeg")


@dataclass(frozen=True, eq=False)
class GrayImage:
    """A single-channel image: row-major float64 samples in [0, 255]."""

    data: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(self.data, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
            raise ValueError(f"expected a non-empty 2-d array, got shape {a.shape}")
        if not np.isfinite(a).all():
            raise ValueError("image contains non-finite values")
        lo = float(a.min())
        hi = float(a.max())
        if lo < 0.0 or hi > 255.0:
            raise ValueError(f"image values outside [0, 255]: min={lo}, max={hi}")
        object.__setattr__(self, "data", a)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def load_gray(path: str | os.PathLike) -> GrayImage:
    """Read a PNG, PGM or JPEG file as grayscale.

    8-bit grayscale passes through unchanged; RGB (and palette) inputs are
    reduced with the BT.601 weights 0.299/0.587/0.114.  Alpha channels and
    16-bit depths are rejected.
    """
    try:
        with Image.open(path) as im:
            fmt = im.format
            if fmt not in _ALLOWED_FORMATS:
                raise ValueError(f"unsupported image format {fmt!r}: {path}")
            if im.mode == "P":
                im = im.convert("RGB")
            if im.mode == "L":
                a = np.asarray(im, dtype=np.float64)
            elif im.mode == "RGB":
                rgb = np.asarray(im, dtype=np.float64)
                a = _LUMA_R * rgb[..., 0] + _LUMA_G * rgb[..., 1] + _LUMA_B * rgb[..., 2]
                # the weights sum to 1 exactly in decimal but not in binary;
                # shave the few-ulp overshoot rather than fail validation
                np.clip(a, 0.0, 255.0, out=a)
            else:
                raise ValueError(
                    f"unsupported image mode {im.mode!r} (no alpha or 16-bit): {path}"
                )
    except UnidentifiedImageError as exc:
        raise ValueError(f"not a readable image file: {path}") from exc
    return GrayImage(a)


def list_images(directory: str | os.PathLike) -> list[Path]:
    """Image files in a directory, sorted by name."""
    d = Path(directory)
    if not d.is_dir():
        raise ValueError(f"not a directory: {directory}")
    files = sorted(
        p for p in d.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS and p.is_file()
    )
    if not files:
        raise ValueError(f"no images found in {directory}")
    return files


def _to_uint8(img: GrayImage) -> np.ndarray:
    return np.clip(np.rint(img.data), 0, 255).astype(np.uint8)


def save_png(img: GrayImage, path: str | os.PathLike) -> None:
    """Write as 8-bit grayscale PNG (values rounded to nearest, clipped)."""
    Image.fromarray(_to_uint8(img), mode="L").save(path, format="PNG")


def save_pgm(img: GrayImage, path: str | os.PathLike) -> None:
    """Write as binary 8-bit PGM (values rounded to nearest, clipped)."""
    a = _to_uint8(img)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(a.tobytes())


def crop_border(img: GrayImage, n: int) -> GrayImage:
    """Drop ``n`` pixels from every side."""
    if n < 0:
        raise ValueError(f"crop must be >= 0, got {n}")
    if n == 0:
        return img
    if 2 * n >= img.height or 2 * n >= img.width:
        raise ValueError(f"crop {n} leaves no pixels for shape {img.shape}")
    return GrayImage(img.data[n:-n, n:-n])


def _check_same_shape(a: GrayImage, b: GrayImage) -> None:
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")


def mse_loss(a: GrayImage, b: GrayImage) -> float:
    """Mean squared pixel difference."""
    _check_same_shape(a, b)
    d = a.data - b.data
    return float(np.mean(d * d))


def rmse(a: GrayImage, b: GrayImage) -> float:
    """Root mean squared pixel difference."""
    return float(np.sqrt(mse_loss(a, b)))
