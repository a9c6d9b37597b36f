"""
Raster - image and mask containers.

Samples are float64 in [0, 1], stored as (height, width, channels) arrays;
8-bit values only exist at the file boundary. Masks are (height, width) bool.
Every container is frozen and its array is marked read-only.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from imaging.errors import DimensionMismatch, ImageFormatError

PathLike = Union[str, Path]

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

_SUFFIX_FORMATS = {".png": "PNG", ".pgm": "PPM", ".ppm": "PPM", ".pnm": "PPM"}


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    data = np.array(array, dtype=dtype, copy=True)
    data.setflags(write=False)
    return data


@dataclass(frozen=True, eq=False)
class Raster:
    """A 1- or 3-channel image with samples in [0, 1]."""
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"Raster needs shape (h, w, 1|3), got {data.shape}")
        if data.shape[0] == 0 or data.shape[1] == 0:
            raise ValueError("Raster must be nonempty")
        if not np.all(np.isfinite(data)):
            raise ValueError("Raster samples must be finite")
        object.__setattr__(self, "data", _frozen(np.clip(data, 0.0, 1.0), np.float64))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def size(self):
        return (self.width, self.height)

    def equals(self, other: "Raster") -> bool:
        """Bit-exact comparison."""
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Per-pixel boolean grid (document, edge or content mask)."""
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise ValueError(f"BinaryMask needs a 2D array, got shape {bits.shape}")
        object.__setattr__(self, "bits", _frozen(bits.astype(bool), bool))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def size(self):
        return (self.width, self.height)

    def count(self) -> int:
        return int(self.bits.sum())

    def equals(self, other: "BinaryMask") -> bool:
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))


def check_same_size(a, b, what: str = "inputs"):
    """Raise DimensionMismatch unless both objects report the same (w, h)."""
    if a.size != b.size:
        raise DimensionMismatch(f"{what} differ in size: {a.size} vs {b.size}")


def bilinear_sample(data: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """
    Bilinear lookup of a (h, w, c) array at arbitrary coordinates.

    Coordinates outside [0, w-1] x [0, h-1] are clamped to the edge. At
    integer coordinates the neighbour weights are exactly zero, so the
    result equals the stored sample bit for bit.
    """
    height, width = data.shape[:2]
    xs = np.clip(np.asarray(xs, dtype=np.float64), 0.0, width - 1)
    ys = np.clip(np.asarray(ys, dtype=np.float64), 0.0, height - 1)

    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]

    top = data[y0, x0] * (1.0 - fx) + data[y0, x1] * fx
    bottom = data[y1, x0] * (1.0 - fx) + data[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def bilinear_at(img: Raster, x: float, y: float) -> np.ndarray:
    """Per-channel value of img at (x, y), clamp-to-edge."""
    return bilinear_sample(img.data, np.array([x]), np.array([y]))[0]


def luma(img: Raster) -> Raster:
    """Grayscale version of img (identity for 1-channel rasters)."""
    if img.channels == 1:
        return img
    return Raster(img.data @ LUMA_WEIGHTS)


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """
    Intersection over union of two masks.

    Two empty masks agree vacuously and score 1.0.
    """
    check_same_size(a, b, "masks")
    union = np.logical_or(a.bits, b.bits).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a.bits, b.bits).sum() / union)


# =========================================================================
# File I/O
# =========================================================================

def _format_for(path: Path) -> str:
    fmt = _SUFFIX_FORMATS.get(path.suffix.lower())
    if fmt is None:
        raise ImageFormatError(f"Unsupported image format: {path.suffix or path.name}")
    return fmt


def _load_pixels(path: PathLike) -> np.ndarray:
    path = Path(path)
    _format_for(path)
    try:
        with Image.open(path) as image:
            image.load()
            if image.mode in ("L", "RGB"):
                pixels = np.asarray(image)
            elif image.mode in ("1", "P", "LA", "RGBA"):
                pixels = np.asarray(image.convert("RGB" if image.mode in ("P", "RGBA") else "L"))
            else:
                raise ImageFormatError(f"Unsupported sample layout {image.mode} in {path}")
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise ImageFormatError(f"Cannot decode {path}: {e}") from e
    if pixels.dtype != np.uint8:
        raise ImageFormatError(f"Only 8-bit samples are supported ({path})")
    return pixels


def read_image(path: PathLike) -> Raster:
    """Read an 8-bit PNG/PGM/PPM into a Raster (value / 255)."""
    return Raster(_load_pixels(path).astype(np.float64) / 255.0)


def to_bytes(data: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_image(img: Raster, path: PathLike):
    """Write a Raster as 8-bit, rounding to nearest."""
    path = Path(path)
    fmt = _format_for(path)
    if path.suffix.lower() == ".pgm" and img.channels != 1:
        raise ImageFormatError("PGM holds single-channel images only")
    if path.suffix.lower() == ".ppm" and img.channels != 3:
        raise ImageFormatError("PPM holds three-channel images only")
    pixels = to_bytes(img.data)
    if img.channels == 1:
        pixels = pixels[:, :, 0]
    Image.fromarray(pixels).save(path, format=fmt)


def read_mask(path: PathLike) -> BinaryMask:
    """Read a mask image; samples >= 128 are document."""
    pixels = _load_pixels(path)
    if pixels.ndim == 3:
        pixels = np.rint(pixels @ LUMA_WEIGHTS)
    return BinaryMask(pixels >= 128)


def write_mask(mask: BinaryMask, path: PathLike):
    """Write a mask as 0 (background) / 255 (document)."""
    path = Path(path)
    Image.fromarray(mask.bits.astype(np.uint8) * 255).save(path, format=_format_for(path))
