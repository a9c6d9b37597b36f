"""
Synthetic ground truth: flat documents, parametric warps with closed-form
backward maps, and textured margins.

Warp family: a homography H (page -> canvas) composed with a vertical
sinusoidal curl applied in page coordinates. For a canvas pixel p,
    (x', y') = H^-1 p
    B(p)     = (x', y' + A sin(2 pi f x' / w_page + phi))
is the page point shown at p, and the forward map is
    F(X, Y)  = H (X, Y - A sin(2 pi f X / w_page + phi)).
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np
from skimage.transform import estimate_transform

from config.dewarp_config import SYNTH_CONFIG
from geometry.contour import boundary
from geometry.polygon import ControlGrid
from geometry.tps import grid_backward_tps
from imaging.errors import DegenerateHomography
from imaging.raster import BinaryMask, PathLike, Raster, bilinear_sample, write_image, write_mask
from imaging.warpfield import DisplacementFlow, pixel_grid, write_flow
from synth.prng import SplitMix64

MIN_PAGE_SIDE = 128
MAX_CONDITION = 1e6
TEXT_INK = 0.1
SOLID_MARGIN = 0.3
CHECKER_CELL = 8
CHECKER_LEVELS = (0.15, 0.4)
NOISE_RANGE = (0.05, 0.45)
INVERSE_ITERATIONS = 30

Size = Tuple[int, int]


@dataclass(frozen=True, eq=False)
class WarpParams:
    homography: np.ndarray  # 3x3, page -> canvas, det 1
    curl_amplitude: float = 0.0
    curl_frequency: float = 1.0
    curl_phase: float = 0.0
    margin_fraction: float = 0.0
    margin_texture: str = "solid"
    margin_seed: int = 0

    def __post_init__(self):
        h = np.array(self.homography, dtype=np.float64)
        if h.shape != (3, 3) or not np.all(np.isfinite(h)):
            raise DegenerateHomography(f"homography must be a finite 3x3 matrix, got shape {h.shape}")
        det = float(np.linalg.det(h))
        if abs(det) < 1e-12:
            raise DegenerateHomography("homography is singular")
        h = h / np.cbrt(det)
        if np.linalg.cond(h) >= MAX_CONDITION:
            raise DegenerateHomography(f"homography condition number {np.linalg.cond(h):.3e} too large")
        h.setflags(write=False)
        object.__setattr__(self, "homography", h)
        if self.curl_amplitude < 0:
            raise ValueError("curl_amplitude must be >= 0")
        if self.margin_fraction < 0:
            raise ValueError("margin_fraction must be >= 0")
        if self.margin_texture not in ("solid", "checker", "noise"):
            raise ValueError(f"unknown margin texture {self.margin_texture!r}")

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.homography)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "homography": self.homography.tolist(),
            "curl_amplitude": self.curl_amplitude,
            "curl_frequency": self.curl_frequency,
            "curl_phase": self.curl_phase,
            "margin_fraction": self.margin_fraction,
            "margin_texture": self.margin_texture,
            "margin_seed": self.margin_seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "WarpParams":
        return cls(**{**data, "homography": np.asarray(data["homography"], dtype=np.float64)})

    @classmethod
    def translation(cls, tx: float, ty: float, **kwargs) -> "WarpParams":
        return cls(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]]), **kwargs)


@dataclass(frozen=True, eq=False)
class SynthSample:
    """
    One generated example. clean lives in page coordinates; every other
    raster, mask and the flow live on the canvas. content_mask is the clean
    content mask carried into the canvas frame.
    """
    clean: Raster
    distorted: Raster
    gt_backward: DisplacementFlow
    doc_mask: BinaryMask
    edge_mask: BinaryMask
    content_mask: BinaryMask
    params: WarpParams
    seed: int

    @property
    def page_size(self) -> Size:
        return self.clean.size

    @property
    def canvas_size(self) -> Size:
        return self.distorted.size


# =========================================================================
# Maps
# =========================================================================

def _project(matrix: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    w = matrix[2, 0] * xs + matrix[2, 1] * ys + matrix[2, 2]
    return (
        (matrix[0, 0] * xs + matrix[0, 1] * ys + matrix[0, 2]) / w,
        (matrix[1, 0] * xs + matrix[1, 1] * ys + matrix[1, 2]) / w,
    )


def _curl(params: WarpParams, page_width: int, xs: np.ndarray) -> np.ndarray:
    return params.curl_amplitude * np.sin(2.0 * np.pi * params.curl_frequency * xs / page_width + params.curl_phase)


def backward_map(params: WarpParams, page_size: Size, points) -> np.ndarray:
    """Canvas points (m, 2) -> page points (m, 2)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    xs, ys = _project(params.inverse, pts[:, 0], pts[:, 1])
    return np.column_stack([xs, ys + _curl(params, page_size[0], xs)])


def forward_map(params: WarpParams, page_size: Size, points) -> np.ndarray:
    """Page points (m, 2) -> canvas points (m, 2); inverse of backward_map."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    xs = pts[:, 0]
    ys = pts[:, 1] - _curl(params, page_size[0], xs)
    return np.column_stack(_project(params.homography, xs, ys))


def _inside_page(xs: np.ndarray, ys: np.ndarray, page_size: Size) -> np.ndarray:
    width, height = page_size
    return (xs >= 0) & (xs <= width - 1) & (ys >= 0) & (ys <= height - 1)


def _page_outline(page_size: Size, step: float = 1.0) -> np.ndarray:
    width, height = page_size
    top = np.arange(0.0, width - 1 + step, step).clip(max=width - 1)
    side = np.arange(0.0, height - 1 + step, step).clip(max=height - 1)
    return np.concatenate([
        np.column_stack([top, np.zeros_like(top)]),
        np.column_stack([top, np.full_like(top, height - 1)]),
        np.column_stack([np.zeros_like(side), side]),
        np.column_stack([np.full_like(side, width - 1), side]),
    ])


def check_fits_canvas(params: WarpParams, page_size: Size, canvas: Size):
    """Raise ValueError unless the warped page plus its margin border fits on canvas."""
    width, height = canvas
    border = params.margin_fraction * min(width, height)
    outline = forward_map(params, page_size, _page_outline(page_size))
    tol = 1e-6
    if (outline[:, 0].min() < border - tol or outline[:, 0].max() > width - 1 - border + tol
            or outline[:, 1].min() < border - tol or outline[:, 1].max() > height - 1 - border + tol):
        raise ValueError(f"canvas {canvas} too small for the warped page with margin {params.margin_fraction}")


# =========================================================================
# Rendering
# =========================================================================

def generate_document(width: int, height: int, seed: int) -> Tuple[Raster, BinaryMask]:
    """
    White page with dark text-line bars and up to two gray figure blocks.

    Bars are 8-14 px high with random lengths; content is everything darker
    than 0.5, so figures (gray 0.35-0.45) and bars both count.
    """
    if width < MIN_PAGE_SIDE or height < MIN_PAGE_SIDE:
        raise ValueError(f"page must be at least {MIN_PAGE_SIDE}x{MIN_PAGE_SIDE}, got {width}x{height}")
    rng = SplitMix64(seed)
    page = np.ones((height, width))

    left = int(round(0.08 * width))
    right = width - left
    top = int(round(0.08 * height))
    bottom = height - top

    y = top
    while True:
        bar = rng.integer(8, 14)
        if y + bar > bottom:
            break
        length = int(round(rng.uniform(0.3, 1.0) * (right - left)))
        page[y:y + bar, left:left + length] = TEXT_INK
        y += bar + rng.integer(8, 16)

    for _ in range(rng.integer(0, 2)):
        fw = rng.integer(width // 5, width // 3)
        fh = rng.integer(height // 8, height // 5)
        fx = rng.integer(left, right - fw)
        fy = rng.integer(top, bottom - fh)
        page[fy:fy + fh, fx:fx + fw] = rng.uniform(0.35, 0.45)

    return Raster(page), BinaryMask(page < 0.5)


def margin_texture(kind: str, seed: int, width: int, height: int) -> np.ndarray:
    """(h, w) background shown outside the document."""
    if kind == "solid":
        return np.full((height, width), SOLID_MARGIN)
    if kind == "checker":
        xs, ys = pixel_grid(width, height)
        odd = ((xs // CHECKER_CELL + ys // CHECKER_CELL) % 2).astype(bool)
        return np.where(odd, CHECKER_LEVELS[1], CHECKER_LEVELS[0])
    if kind == "noise":
        return SplitMix64(seed).uniform_array(width * height, *NOISE_RANGE).reshape(height, width)
    raise ValueError(f"unknown margin texture {kind!r}")


def warp_document(
    clean: Raster,
    content_mask: BinaryMask,
    params: WarpParams,
    canvas: Size,
    seed: int = 0,
) -> SynthSample:
    """Render clean onto the canvas through the backward map, margins textured."""
    if content_mask.size != clean.size:
        raise ValueError(f"content mask {content_mask.size} does not match page {clean.size}")
    check_fits_canvas(params, clean.size, canvas)
    width, height = canvas

    xs, ys = pixel_grid(width, height)
    mapped = backward_map(params, clean.size, np.column_stack([xs.ravel(), ys.ravel()]))
    bx = mapped[:, 0].reshape(height, width)
    by = mapped[:, 1].reshape(height, width)
    inside = _inside_page(bx, by, clean.size)

    page_values = bilinear_sample(clean.data, bx, by)
    margin = margin_texture(params.margin_texture, params.margin_seed, width, height)
    distorted = np.where(inside[:, :, None], page_values, margin[:, :, None])

    flow = np.zeros((height, width, 2))
    flow[:, :, 0] = np.where(inside, bx - xs, 0.0)
    flow[:, :, 1] = np.where(inside, by - ys, 0.0)

    carried = bilinear_sample(content_mask.bits.astype(np.float64)[:, :, None], bx, by)[:, :, 0]
    doc_mask = BinaryMask(inside)
    return SynthSample(
        clean=clean,
        distorted=Raster(distorted),
        gt_backward=DisplacementFlow(flow),
        doc_mask=doc_mask,
        edge_mask=boundary(doc_mask),
        content_mask=BinaryMask(inside & (carried >= 0.5)),
        params=params,
        seed=seed,
    )


def random_warp_params(
    seed: int,
    page_size: Size = SYNTH_CONFIG["page_size"],
    canvas_size: Size = SYNTH_CONFIG["canvas_size"],
    margin_fraction: float = SYNTH_CONFIG["margin_fraction"],
    max_corner_jitter: float = SYNTH_CONFIG["max_corner_jitter"],
    curl_amplitude: Tuple[float, float] = SYNTH_CONFIG["curl_amplitude"],
    curl_frequency: Tuple[float, float] = SYNTH_CONFIG["curl_frequency"],
    margin_textures: Tuple[str, ...] = SYNTH_CONFIG["margin_textures"],
) -> WarpParams:
    """
    Perspective from jittered page corners, plus a random curl.

    The page rectangle is centred in the canvas inside the margin border,
    inset far enough that corner jitter and curl keep it on the canvas.
    """
    rng = SplitMix64(seed)
    page_w, page_h = page_size
    canvas_w, canvas_h = canvas_size

    amplitude = rng.uniform(*curl_amplitude)
    frequency = rng.uniform(*curl_frequency)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    texture = rng.choice(tuple(margin_textures))
    margin_seed = rng.next_u64() >> 1

    pad = margin_fraction * min(canvas_w, canvas_h) + 2.0 * amplitude + 2.0
    scale = min(1.0, (canvas_w - 1 - 2 * pad) / (page_w - 1), (canvas_h - 1 - 2 * pad) / (page_h - 1))
    if scale <= 0:
        raise ValueError(f"canvas {canvas_size} leaves no room for page {page_size}")
    jitter_x = max_corner_jitter * scale * (page_w - 1)
    jitter_y = max_corner_jitter * scale * (page_h - 1)
    half_w = scale * (page_w - 1) / 2.0 - jitter_x
    half_h = scale * (page_h - 1) / 2.0 - jitter_y
    cx, cy = (canvas_w - 1) / 2.0, (canvas_h - 1) / 2.0

    src = np.array([[0, 0], [page_w - 1, 0], [page_w - 1, page_h - 1], [0, page_h - 1]], dtype=np.float64)
    dst = np.array([[cx - half_w, cy - half_h], [cx + half_w, cy - half_h],
                    [cx + half_w, cy + half_h], [cx - half_w, cy + half_h]])
    dst += rng.uniform_array(8, -1.0, 1.0).reshape(4, 2) * np.array([jitter_x, jitter_y])

    homography = estimate_transform("projective", src, dst).params
    return WarpParams(homography, amplitude, frequency, phase, margin_fraction, texture, margin_seed)


def synthesize(
    seed: int,
    page_size: Size = SYNTH_CONFIG["page_size"],
    canvas_size: Size = SYNTH_CONFIG["canvas_size"],
    **warp_overrides,
) -> SynthSample:
    """generate_document + random_warp_params + warp_document for one seed."""
    clean, content = generate_document(page_size[0], page_size[1], seed)
    params = random_warp_params(seed, page_size, canvas_size, **warp_overrides)
    return warp_document(clean, content, params, canvas_size, seed)


# =========================================================================
# Residual after margin removal
# =========================================================================

def _invert_tps(transform, targets: np.ndarray) -> np.ndarray:
    """Solve T(x) = targets by fixed-point iteration on the affine Jacobian."""
    jacobian = transform.jacobian_of_affine()
    offset = transform.affine[:, 0]
    step = np.linalg.inv(jacobian)
    estimate = (targets - offset) @ step.T
    for _ in range(INVERSE_ITERATIONS):
        estimate = estimate + (targets - transform.apply(estimate)) @ step.T
    return estimate


def residual_after_mrm(
    sample: SynthSample,
    grid: ControlGrid,
    regularization: float,
) -> Tuple[DisplacementFlow, Raster]:
    """
    Ground-truth residual flow on the preliminary (MRM output) frame, and
    the clean page resampled onto that frame as the flat reference.

    The preliminary pixel q shows distorted(T(q)). The page point that
    belongs at q is phi(q), the output rectangle scaled onto the page, and
    the preliminary pixel showing it is T^-1(F(phi(q))). The residual is
    that location minus q.
    """
    out_w, out_h = grid.output_size
    page_w, page_h = sample.page_size
    transform = grid_backward_tps(grid, regularization)

    xs, ys = pixel_grid(out_w, out_h)
    sx = (page_w - 1) / max(out_w - 1, 1)
    sy = (page_h - 1) / max(out_h - 1, 1)
    page_points = np.column_stack([xs.ravel() * sx, ys.ravel() * sy])

    canvas_points = forward_map(sample.params, sample.page_size, page_points)
    source = _invert_tps(transform, canvas_points)

    residual = np.empty((out_h, out_w, 2))
    residual[:, :, 0] = source[:, 0].reshape(out_h, out_w) - xs
    residual[:, :, 1] = source[:, 1].reshape(out_h, out_w) - ys
    reference = bilinear_sample(
        sample.clean.data,
        page_points[:, 0].reshape(out_h, out_w),
        page_points[:, 1].reshape(out_h, out_w),
    )
    return DisplacementFlow(residual), Raster(reference)


# =========================================================================
# Output
# =========================================================================

def sample_metadata(sample: SynthSample) -> Dict[str, Any]:
    return {
        "seed": sample.seed,
        "page_size": list(sample.page_size),
        "canvas_size": list(sample.canvas_size),
        "params": sample.params.to_dict(),
    }


def write_sample(sample: SynthSample, directory: PathLike) -> Dict[str, str]:
    """Write the standard sample files into directory; returns name -> path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "clean": directory / "clean.png",
        "distorted": directory / "distorted.png",
        "gt": directory / "gt.flo",
        "doc_mask": directory / "doc_mask.pgm",
        "edge_mask": directory / "edge_mask.pgm",
        "content_mask": directory / "content_mask.pgm",
        "params": directory / "params.json",
    }
    write_image(sample.clean, paths["clean"])
    write_image(sample.distorted, paths["distorted"])
    write_flow(sample.gt_backward, paths["gt"])
    write_mask(sample.doc_mask, paths["doc_mask"])
    write_mask(sample.edge_mask, paths["edge_mask"])
    write_mask(sample.content_mask, paths["content_mask"])
    paths["params"].write_text(json.dumps(sample_metadata(sample), indent=2) + "\n")
    return {name: str(path) for name, path in paths.items()}
