"""
Shared builders for the root-level test scripts.
"""

import contextlib
import io
import json

import numpy as np
from scipy import ndimage

from geometry.contour import fill_polygon
from imaging.raster import BinaryMask, Raster
from imaging.warpfield import DisplacementFlow


def random_raster(seed: int, width: int, height: int, channels: int = 1) -> Raster:
    rng = np.random.default_rng(seed)
    return Raster(rng.random((height, width, channels)))


def textured_array(seed: int, width: int, height: int, blur: float = 1.5) -> np.ndarray:
    """Smoothed noise scaled into [0.1, 0.9]; rich enough for block matching."""
    rng = np.random.default_rng(seed)
    noise = ndimage.gaussian_filter(rng.random((height, width)), blur)
    noise = (noise - noise.min()) / max(np.ptp(noise), 1e-12)
    return 0.1 + 0.8 * noise


def smooth_page(width: int, height: int) -> Raster:
    """Low-frequency pattern with values inside (0, 1)."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    values = 0.5 + 0.2 * np.sin(2 * np.pi * xs / 97.0) * np.cos(2 * np.pi * ys / 131.0) + 0.1 * xs / width
    return Raster(values)


def polygon_mask(points, width: int, height: int) -> BinaryMask:
    return fill_polygon(points, width, height)


def rectangle_mask(width: int, height: int, x0: int, y0: int, x1: int, y1: int) -> BinaryMask:
    """Pixels x0..x1, y0..y1 inclusive."""
    bits = np.zeros((height, width), dtype=bool)
    bits[y0:y1 + 1, x0:x1 + 1] = True
    return BinaryMask(bits)


def checkerboard_flow(width: int, height: int, variance: float) -> DisplacementFlow:
    """
    Flow whose pooled population variance is `variance`: both components
    alternate +-sqrt(variance). width * height must be even.
    """
    ys, xs = np.mgrid[0:height, 0:width]
    signs = np.where((xs + ys) % 2 == 0, 1.0, -1.0)
    magnitude = np.sqrt(variance)
    return DisplacementFlow(np.stack([signs * magnitude, signs * magnitude], axis=2))


def random_flow(seed: int, width: int, height: int, scale: float = 3.0) -> DisplacementFlow:
    rng = np.random.default_rng(seed)
    return DisplacementFlow(rng.normal(0.0, scale, (height, width, 2)))


def run_cli(argv):
    """Run the CLI in-process; returns (exit code, stdout text)."""
    from cli.commands import main

    buffer = io.StringIO()
    with contextlib.redirect_stdout(buffer):
        code = main([str(a) for a in argv])
    return code, buffer.getvalue()


def run_cli_json(argv):
    code, out = run_cli(argv)
    return code, (json.loads(out) if out.strip() else None)
