"""8-bit raster images and binary PGM/PPM/PNG I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError


class ImageReadError(OSError):
    """Image missing, truncated or in an unsupported format."""


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Row-major 8-bit pixels, shape ``(height, width)`` or ``(height, width, 3)``."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.dtype != np.uint8:
            raise ValueError(f"pixel data must be uint8, got {d.dtype}")
        if d.ndim not in (2, 3) or (d.ndim == 3 and d.shape[2] != 3):
            raise ValueError(f"expected (h, w) or (h, w, 3) pixels, got shape {d.shape}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("image must be non-empty")
        object.__setattr__(self, "data", d)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    def gray(self) -> np.ndarray:
        """Float luminance in [0, 255]."""
        if self.channels == 1:
            return self.data.astype(float)
        return self.data.astype(float) @ np.array([0.299, 0.587, 0.114])


_FORMATS = {".pgm": "PPM", ".ppm": "PPM", ".pnm": "PPM", ".png": "PNG"}


def read_image(path) -> RasterImage:
    """Load a PGM (P5), PPM (P6) or PNG file as grayscale or RGB."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "1", "I", "I;16", "F"):
                arr = np.asarray(im.convert("L"))
            else:
                arr = np.asarray(im.convert("RGB"))
    except (FileNotFoundError, UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageReadError(f"cannot read image {path}: {exc}") from exc
    return RasterImage(np.ascontiguousarray(arr, dtype=np.uint8))


def write_image(img: RasterImage, path) -> None:
    """Write by extension: .pgm/.ppm as binary netpbm, .png as PNG."""
    path = Path(path)
    fmt = _FORMATS.get(path.suffix.lower())
    if fmt is None:
        raise ValueError(f"unsupported image extension {path.suffix!r}")
    if path.suffix.lower() == ".pgm" and img.channels != 1:
        raise ValueError("PGM output needs a single-channel image")
    if path.suffix.lower() == ".ppm" and img.channels != 3:
        raise ValueError("PPM output needs an RGB image")
    mode = "L" if img.channels == 1 else "RGB"
    Image.fromarray(img.data, mode=mode).save(path, format=fmt)
