"""
Thin-plate spline fitting and image warping.

The kernel is U(r) = r^2 log r^2 with U(0) = 0. Coordinates are centred and
scaled to unit extent before fitting so the pivot test is scale-free; the
interpolant itself is unchanged by that normalisation (the extra
r^2 log s^2 term is absorbed by the affine part under the side conditions),
only the meaning of the regularization constant is tied to unit extent.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy import linalg

from geometry.polygon import ControlGrid
from imaging.errors import SingularSystem
from imaging.raster import Raster, bilinear_sample
from imaging.warpfield import pixel_grid

PIVOT_TOLERANCE = 1e-10
_EVAL_CHUNK = 65536


def tps_kernel(r_sq: np.ndarray) -> np.ndarray:
    """U evaluated on squared distances: r^2 log r^2, zero at r = 0."""
    out = np.zeros_like(r_sq)
    positive = r_sq > 0
    out[positive] = r_sq[positive] * np.log(r_sq[positive])
    return out


def _squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a[:, None, 0] - b[None, :, 0]) ** 2 + (a[:, None, 1] - b[None, :, 1]) ** 2


@dataclass(frozen=True, eq=False)
class TpsTransform:
    """
    Fitted mapping f(p) = A [1, p'] + sum_i w_i U(|p' - s_i'|), where p' is p
    in the normalised frame (p - centre) / scale.
    """
    control_sources: np.ndarray  # (n, 2) pixel coordinates
    normalized_affine: np.ndarray  # (3, 2): rows = constant, x', y'
    weights: np.ndarray  # (n, 2)
    regularization: float
    centre: np.ndarray
    scale: float

    @property
    def affine(self) -> np.ndarray:
        """2x3 matrix [[c, a_x, a_y], ...] acting on raw pixel coordinates."""
        const, ax, ay = self.normalized_affine
        raw = np.empty((2, 3))
        raw[:, 1] = ax / self.scale
        raw[:, 2] = ay / self.scale
        raw[:, 0] = const - raw[:, 1] * self.centre[0] - raw[:, 2] * self.centre[1]
        return raw

    def _normalise(self, points: np.ndarray) -> np.ndarray:
        return (points - self.centre) / self.scale

    def apply(self, points) -> np.ndarray:
        """Map an (m, 2) array of points."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        result = np.empty_like(pts)
        controls = self._normalise(self.control_sources)
        for start in range(0, len(pts), _EVAL_CHUNK):
            chunk = self._normalise(pts[start:start + _EVAL_CHUNK])
            basis = np.column_stack([np.ones(len(chunk)), chunk])
            kernel = tps_kernel(_squared_distances(chunk, controls))
            result[start:start + _EVAL_CHUNK] = basis @ self.normalized_affine + kernel @ self.weights
        return result

    def jacobian_of_affine(self) -> np.ndarray:
        return self.affine[:, 1:]


def tps_fit(src: Sequence, dst: Sequence, regularization: float = 0.0) -> TpsTransform:
    """
    Fit a TPS mapping src points onto dst points.

    Solves [[K + reg I, P], [P^T, 0]] [w; a] = [dst; 0]; with reg = 0 the
    map interpolates every pair exactly.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError(f"point arrays must both be (n, 2), got {src.shape} and {dst.shape}")
    if len(src) < 3:
        raise SingularSystem("TPS needs at least 3 point pairs")
    if regularization < 0:
        raise ValueError("regularization must be >= 0")

    n = len(src)
    centre = src.mean(axis=0)
    scale = float(np.max(np.abs(src - centre)))
    if scale == 0.0:
        raise SingularSystem("all control points coincide")
    normalised = (src - centre) / scale

    system = np.zeros((n + 3, n + 3))
    system[:n, :n] = tps_kernel(_squared_distances(normalised, normalised)) + regularization * np.eye(n)
    system[:n, n] = 1.0
    system[:n, n + 1:] = normalised
    system[n, :n] = 1.0
    system[n + 1:, :n] = normalised.T

    rhs = np.zeros((n + 3, 2))
    rhs[:n] = dst

    lu, piv = linalg.lu_factor(system, check_finite=True)
    smallest_pivot = float(np.min(np.abs(np.diag(lu))))
    if smallest_pivot < PIVOT_TOLERANCE:
        raise SingularSystem(f"TPS system is singular (pivot {smallest_pivot:.3e})")
    solution = linalg.lu_solve((lu, piv), rhs)

    return TpsTransform(
        control_sources=src.copy(),
        normalized_affine=solution[n:],
        weights=solution[:n],
        regularization=float(regularization),
        centre=centre,
        scale=scale,
    )


def grid_backward_tps(grid: ControlGrid, regularization: float) -> TpsTransform:
    """Backward map of a control grid: output-rectangle points -> distorted image."""
    return tps_fit(grid.target_points, grid.source_points, regularization)


def tps_warp(img: Raster, grid: ControlGrid, regularization: float = 1e-3) -> Raster:
    """Resample img onto the grid's output rectangle through the backward TPS."""
    mapped = backward_field(grid_backward_tps(grid, regularization), grid.output_size)
    return Raster(bilinear_sample(img.data, mapped[:, :, 0], mapped[:, :, 1]))


def backward_field(transform: TpsTransform, size: Tuple[int, int]) -> np.ndarray:
    """(h, w, 2) array of mapped coordinates for every pixel of an output of the given size."""
    width, height = size
    xs, ys = pixel_grid(width, height)
    mapped = transform.apply(np.column_stack([xs.ravel(), ys.ravel()]))
    return mapped.reshape(height, width, 2)
