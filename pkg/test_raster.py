"""
Tests for the raster containers, bilinear lookup, IoU and image/mask files.
"""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from imaging.errors import DimensionMismatch, ImageFormatError
from imaging.raster import (
    BinaryMask,
    Raster,
    bilinear_at,
    iou,
    luma,
    read_image,
    read_mask,
    write_image,
    write_mask,
)
from tests.fixtures import random_raster, rectangle_mask


def test_raster_invariants():
    """Samples are clipped, frozen and shaped (h, w, c)."""
    print("=" * 60)
    print("TEST 1: Raster Invariants")
    print("=" * 60)

    img = Raster(np.array([[-0.5, 0.25], [0.75, 1.5]]))
    print(f"\n  size={img.size} channels={img.channels}")
    assert img.size == (2, 2), "size is (width, height)"
    assert img.channels == 1, "2D input becomes a 1-channel raster"
    assert img.data[0, 0, 0] == 0.0 and img.data[1, 1, 0] == 1.0, "samples clipped into [0, 1]"
    assert not img.data.flags.writeable, "raster data is read-only"

    with pytest.raises(ValueError):
        Raster(np.zeros((4, 4, 2)))
    with pytest.raises(ValueError):
        Raster(np.zeros((0, 4)))
    print("[+] Invalid shapes rejected")


def test_bilinear_at():
    """Exact at pixel centres, midpoint average between them, clamped outside."""
    print("\n" + "=" * 60)
    print("TEST 2: Bilinear Lookup")
    print("=" * 60)

    img = Raster(np.array([[0.0, 1.0], [0.5, 0.25]]))
    assert bilinear_at(img, 1.0, 0.0)[0] == 1.0, "integer coordinate returns the pixel"
    assert bilinear_at(img, 0.5, 0.0)[0] == 0.5, "horizontal midpoint"
    centre = bilinear_at(img, 0.5, 0.5)[0]
    assert abs(centre - (0.0 + 1.0 + 0.5 + 0.25) / 4) < 1e-15, "centre of the 2x2 block"
    assert bilinear_at(img, -3.0, 7.0)[0] == 0.5, "outside coordinates clamp to the edge"

    rgb = random_raster(4, 9, 7, channels=3)
    for x, y in [(0, 0), (8, 6), (3, 2)]:
        assert np.array_equal(bilinear_at(rgb, x, y), rgb.data[y, x]), "bit-exact at centres"
    print("[+] Bilinear lookup checks passed")


def test_luma_and_iou():
    print("\n" + "=" * 60)
    print("TEST 3: Luma and IoU")
    print("=" * 60)

    white = Raster(np.ones((3, 3, 3)))
    assert np.allclose(luma(white).data, 1.0), "luma weights sum to one"

    a = rectangle_mask(10, 10, 0, 0, 4, 9)
    b = rectangle_mask(10, 10, 5, 0, 9, 9)
    assert iou(a, a) == 1.0, "identical masks"
    assert iou(a, b) == 0.0, "disjoint masks"
    assert iou(BinaryMask.empty(5, 5), BinaryMask.empty(5, 5)) == 1.0, "two empty masks agree"
    half = rectangle_mask(10, 10, 0, 0, 9, 4)
    print(f"\n  iou(left half, top half) = {iou(a, half):.4f}")
    assert abs(iou(a, half) - 25 / 75) < 1e-12, "quarter overlap of two halves"

    with pytest.raises(DimensionMismatch):
        iou(a, BinaryMask.empty(9, 10))
    print("[+] IoU checks passed")


def test_image_and_mask_files(tmp_path):
    """PNG/PGM/PPM round trips and mask thresholding."""
    print("\n" + "=" * 60)
    print("TEST 4: Image and Mask Files")
    print("=" * 60)

    levels = np.arange(256, dtype=np.float64).reshape(16, 16) / 255.0
    gray = Raster(levels)
    for name in ("gray.png", "gray.pgm"):
        write_image(gray, tmp_path / name)
        back = read_image(tmp_path / name)
        assert back.equals(gray), f"{name} round trip is exact for 8-bit levels"

    rgb = Raster(np.stack([levels, levels[::-1], levels.T], axis=2))
    write_image(rgb, tmp_path / "rgb.ppm")
    assert read_image(tmp_path / "rgb.ppm").equals(rgb), "PPM round trip"

    with pytest.raises(ImageFormatError):
        write_image(rgb, tmp_path / "rgb.pgm")
    with pytest.raises(ImageFormatError):
        write_image(gray, tmp_path / "gray.bmp")

    (tmp_path / "broken.png").write_bytes(b"not an image at all")
    with pytest.raises(ImageFormatError):
        read_image(tmp_path / "broken.png")
    with pytest.raises(FileNotFoundError):
        read_image(tmp_path / "missing.png")

    mask = rectangle_mask(20, 12, 3, 2, 15, 9)
    write_mask(mask, tmp_path / "mask.pgm")
    assert read_mask(tmp_path / "mask.pgm").equals(mask), "mask PGM round trip is identical"
    raw = (tmp_path / "mask.pgm").read_bytes()
    assert set(np.frombuffer(raw[-240:], dtype=np.uint8)) <= {0, 255}, "masks are stored as 0/255"
    print("[+] File round trips passed")


def main():
    """Run all tests."""
    print("\n" + "=" * 60)
    print("Testing Raster")
    print("=" * 60 + "\n")

    test_raster_invariants()
    test_bilinear_at()
    test_luma_and_iou()
    with tempfile.TemporaryDirectory() as tmp:
        test_image_and_mask_files(Path(tmp))

    print("\n" + "=" * 60)
    print("Raster Tests Complete!")
    print("=" * 60)


if __name__ == "__main__":
    main()
