"""
Evaluation metrics: MS-SSIM, SSIM, local distortion and character error rate,
plus a block-matching dense flow estimator that supplies the correspondence
field for local distortion when none is given.
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import ndimage

from config.dewarp_config import BLOCK_MATCHING_CONFIG, MS_SSIM_CONFIG, merged
from imaging.errors import ConfigError, EmptyReference
from imaging.raster import Raster, bilinear_sample, check_same_size, luma
from imaging.warpfield import DisplacementFlow, pixel_grid


@dataclass(frozen=True)
class MsSsimParams:
    scale_weights: Tuple[float, ...] = MS_SSIM_CONFIG["scale_weights"]
    window: int = MS_SSIM_CONFIG["window"]
    sigma: float = MS_SSIM_CONFIG["sigma"]
    k1: float = MS_SSIM_CONFIG["k1"]
    k2: float = MS_SSIM_CONFIG["k2"]

    def __post_init__(self):
        if len(self.scale_weights) < 1 or abs(sum(self.scale_weights) - 1.0) > 1e-4:
            raise ConfigError(f"scale weights must sum to 1, got {sum(self.scale_weights)}")
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"window must be odd, got {self.window}")
        if self.sigma <= 0:
            raise ConfigError("sigma must be > 0")

    @classmethod
    def from_dict(cls, overrides: Optional[Dict[str, Any]] = None) -> "MsSsimParams":
        values = merged(MS_SSIM_CONFIG, overrides)
        values["scale_weights"] = tuple(values["scale_weights"])
        return cls(**values)

    @property
    def scales(self) -> int:
        return len(self.scale_weights)

    def min_side(self) -> int:
        return self.window * 2 ** (self.scales - 1)


# =========================================================================
# Structural similarity
# =========================================================================

def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - size // 2
    g = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Separable correlation keeping only positions where the window fits."""
    half = len(window) // 2
    out = ndimage.correlate1d(x, window, axis=0, mode="constant")
    out = ndimage.correlate1d(out, window, axis=1, mode="constant")
    return out[half:x.shape[0] - half, half:x.shape[1] - half]


def _ssim_terms(x: np.ndarray, y: np.ndarray, params: MsSsimParams) -> Tuple[float, float]:
    """(mean SSIM, mean contrast-structure) at a single scale."""
    window = _gaussian_window(params.window, params.sigma)
    c1 = params.k1 ** 2
    c2 = params.k2 ** 2

    mu_x = _filter_valid(x, window)
    mu_y = _filter_valid(y, window)
    sigma_xx = _filter_valid(x * x, window) - mu_x * mu_x
    sigma_yy = _filter_valid(y * y, window) - mu_y * mu_y
    sigma_xy = _filter_valid(x * y, window) - mu_x * mu_y

    cs_map = (2.0 * sigma_xy + c2) / (sigma_xx + sigma_yy + c2)
    ssim_map = ((2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)) * cs_map
    return float(ssim_map.mean()), float(cs_map.mean())


def _downsample(x: np.ndarray) -> np.ndarray:
    """2x2 mean, dropping a trailing odd row/column."""
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    return x[:h, :w].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _gray_pair(a: Raster, b: Raster) -> Tuple[np.ndarray, np.ndarray]:
    check_same_size(a, b, "images")
    return luma(a).data[:, :, 0], luma(b).data[:, :, 0]


def ssim(a: Raster, b: Raster, params: Optional[MsSsimParams] = None) -> float:
    """Single-scale Gaussian-window SSIM of the luma channels."""
    params = params or MsSsimParams()
    x, y = _gray_pair(a, b)
    if min(x.shape) < params.window:
        raise ValueError(f"image {a.size} smaller than the {params.window}px window")
    return _ssim_terms(x, y, params)[0]


def ms_ssim(a: Raster, b: Raster, params: Optional[MsSsimParams] = None) -> float:
    """
    Multi-scale SSIM: contrast-structure terms at every scale but the
    coarsest, full SSIM at the coarsest, combined by weighted geometric mean.
    Negative per-scale terms are clipped to 0 before exponentiation.
    """
    params = params or MsSsimParams()
    x, y = _gray_pair(a, b)
    if min(x.shape) < params.min_side():
        raise ValueError(
            f"image {a.size} too small for {params.scales} scales (min side {params.min_side()})")

    weights = np.asarray(params.scale_weights, dtype=np.float64)
    terms = np.empty(params.scales)
    for level in range(params.scales):
        ssim_value, cs_value = _ssim_terms(x, y, params)
        if level == params.scales - 1:
            terms[level] = ssim_value
        else:
            terms[level] = cs_value
            x, y = _downsample(x), _downsample(y)
    return float(np.prod(np.maximum(terms, 0.0) ** weights))


# =========================================================================
# Local distortion
# =========================================================================

def local_distortion(correspondence: DisplacementFlow) -> float:
    """Mean displacement magnitude of a dense correspondence field."""
    return float(np.mean(np.hypot(correspondence.u, correspondence.v)))


def _candidate_shifts(search: int):
    shifts = [(du, dv) for dv in range(-search, search + 1) for du in range(-search, search + 1)]
    shifts.sort(key=lambda s: (s[0] ** 2 + s[1] ** 2, s[1], s[0]))
    return shifts


def estimate_dense_flow(
    a: Raster,
    b: Raster,
    patch: int = BLOCK_MATCHING_CONFIG["patch"],
    search: int = BLOCK_MATCHING_CONFIG["search"],
) -> DisplacementFlow:
    """
    Block-matching correspondence field from a to b.

    Every patch of a on a patch-sized grid is matched against b at all
    in-bounds shifts within +-search; the shift d with the smallest SSD is
    kept, so sample(b, field) approximates a. Ties go to the smallest |d|,
    then to smaller dv, then smaller du. Patch shifts are interpolated
    bilinearly between patch centres.
    """
    x, y = _gray_pair(a, b)
    height, width = x.shape
    if patch < 1 or search < 0:
        raise ValueError("patch must be >= 1 and search >= 0")
    if height < patch or width < patch:
        raise ValueError(f"image {a.size} smaller than patch {patch}")

    rows, cols = height // patch, width // patch
    crop_h, crop_w = rows * patch, cols * patch
    reference = x[:crop_h, :crop_w]
    padded = np.pad(y, search, mode="constant", constant_values=np.nan)

    best_cost = np.full((rows, cols), np.inf)
    best_shift = np.zeros((rows, cols, 2))
    for du, dv in _candidate_shifts(search):
        shifted = padded[search + dv:search + dv + crop_h, search + du:search + du + crop_w]
        cost = ((reference - shifted) ** 2).reshape(rows, patch, cols, patch).sum(axis=(1, 3))
        better = cost < best_cost  # NaN (out of bounds) never compares smaller
        best_cost[better] = cost[better]
        best_shift[better] = (du, dv)

    centre = (patch - 1) / 2.0
    xs, ys = pixel_grid(width, height)
    field = bilinear_sample(best_shift, (xs - centre) / patch, (ys - centre) / patch)
    return DisplacementFlow(field)


# =========================================================================
# Character error rate
# =========================================================================

def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over code points."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != cb),
            ))
        previous = current
    return previous[-1]


def cer(recognized: str, reference: str) -> float:
    """(substitutions + insertions + deletions) / len(reference); may exceed 1."""
    if not reference:
        raise EmptyReference("reference text is empty")
    return levenshtein(recognized, reference) / len(reference)
