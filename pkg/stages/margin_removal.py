"""
Margin Removal Module - document mask -> preliminary dewarped image.

Pipeline: clean the mask, find its four corners, place equidistant control
points on each edge, and TPS-warp the document onto a rectangle. Inputs whose
mask does not look like a complete quadrilateral (IoU of the mask against the
control-grid polygon below threshold) are passed through untouched.
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import ndimage
from skimage.filters import threshold_otsu
from skimage.morphology import disk

from config.dewarp_config import MRM_CONFIG, merged
from geometry.contour import EIGHT_CONNECTED, boundary, fill_holes, largest_component
from geometry.polygon import (
    ControlGrid,
    boundary_control_points,
    extract_document_quad,
    mask_from_control_grid,
)
from geometry.tps import tps_warp
from imaging.errors import ConfigError, CornerNotOnContour, DegenerateMask, NoDocument, SingularSystem
from imaging.raster import BinaryMask, Raster, check_same_size, iou, luma
from stages import BaseStage

MIN_DOCUMENT_FRACTION = 0.01
CLOSING_RADIUS = 2


@dataclass(frozen=True)
class MrmConfig:
    iou_skip_threshold: float = MRM_CONFIG["iou_skip_threshold"]
    control_points_per_edge: int = MRM_CONFIG["control_points_per_edge"]
    corner_epsilon_fraction: float = MRM_CONFIG["corner_epsilon_fraction"]
    tps_regularization: float = MRM_CONFIG["tps_regularization"]
    control_points_along: str = MRM_CONFIG["control_points_along"]
    min_component_area: int = MRM_CONFIG["min_component_area"]

    def __post_init__(self):
        if not 0.0 < self.iou_skip_threshold <= 1.0:
            raise ConfigError(f"iou_skip_threshold must be in (0, 1], got {self.iou_skip_threshold}")
        if self.control_points_per_edge < 0:
            raise ConfigError("control_points_per_edge must be >= 0")
        if self.corner_epsilon_fraction < 0 or self.tps_regularization < 0:
            raise ConfigError("corner_epsilon_fraction and tps_regularization must be >= 0")
        if self.control_points_along not in ("contour", "polygon"):
            raise ConfigError(f"control_points_along must be contour|polygon, got {self.control_points_along}")

    @classmethod
    def from_dict(cls, overrides: Optional[Dict[str, Any]] = None) -> "MrmConfig":
        return cls(**merged(MRM_CONFIG, overrides))


@dataclass(frozen=True, eq=False)
class MrmOutcome:
    preliminary: Raster
    skipped: bool
    mask_used: BinaryMask
    iou_score: float
    grid: Optional[ControlGrid] = None
    skip_reason: Optional[str] = None

    def summary(self) -> Dict[str, Any]:
        return {
            "skipped": self.skipped,
            "iou_score": self.iou_score,
            "skip_reason": self.skip_reason,
            "output_size": list(self.preliminary.size),
        }


# =========================================================================
# Mask prediction (classical stand-in) and cleaning
# =========================================================================

def _close(bits: np.ndarray, radius: int) -> np.ndarray:
    padded = np.pad(bits, radius)
    closed = ndimage.binary_closing(padded, structure=disk(radius))
    return closed[radius:-radius, radius:-radius]


def _centre_component(foreground: np.ndarray) -> Optional[np.ndarray]:
    """Hole-filled 8-connected component of foreground containing the image centre."""
    filled = ndimage.binary_fill_holes(foreground)
    labels, _ = ndimage.label(filled, structure=EIGHT_CONNECTED)
    label = labels[foreground.shape[0] // 2, foreground.shape[1] // 2]
    return None if label == 0 else labels == label


def _touches_border(component: np.ndarray) -> bool:
    return bool(component[0].any() or component[-1].any() or component[:, 0].any() or component[:, -1].any())


def _document_polarity(gray: np.ndarray, threshold: float) -> np.ndarray:
    """
    Foreground (bright or dark side of the threshold) whose hole-filled
    region covers the image centre. When both sides do, the one whose
    centre component stays off the image border wins; bright breaks ties.
    """
    bright = gray > threshold
    candidates = []
    for foreground in (bright, ~bright):
        component = _centre_component(foreground)
        if component is not None:
            candidates.append((_touches_border(component), foreground))
    if not candidates:
        return bright
    return min(candidates, key=lambda c: c[0])[1]


def segment_document(img: Raster) -> Tuple[BinaryMask, BinaryMask]:
    """
    Document and edge masks from a global Otsu threshold.

    The polarity whose foreground contains the image centre is kept; the
    largest component is hole-filled and closed (radius 2). The edge mask is
    the component boundary dilated by one pixel.
    """
    gray = luma(img).data[:, :, 0]
    if float(np.ptp(gray)) < 1e-6:
        raise NoDocument("image is uniform; no separable component")

    foreground = _document_polarity(gray, threshold_otsu(gray))
    component = largest_component(BinaryMask(foreground))
    if component.count() < MIN_DOCUMENT_FRACTION * gray.size:
        raise NoDocument(f"largest component covers {component.count()} of {gray.size} px")

    filled = ndimage.binary_fill_holes(component.bits)
    doc_mask = BinaryMask(_close(filled, CLOSING_RADIUS))
    edge_mask = BinaryMask(ndimage.binary_dilation(boundary(doc_mask).bits, structure=EIGHT_CONNECTED))
    return doc_mask, edge_mask


def clean_mask(mask: BinaryMask) -> BinaryMask:
    """Largest 8-connected component with enclosed holes filled."""
    if mask.count() == 0:
        return mask
    return fill_holes(largest_component(mask))


# =========================================================================
# Mask-based dewarper with IoU-gated skip
# =========================================================================

def margin_removal(img: Raster, mask: BinaryMask, cfg: Optional[MrmConfig] = None) -> MrmOutcome:
    """
    Remove the margin of img using its document mask.

    Every geometric failure degrades to a skip: the outcome then carries the
    unmodified input as its preliminary image.
    """
    cfg = cfg or MrmConfig()
    check_same_size(img, mask, "image and mask")

    cleaned = clean_mask(mask)
    try:
        corners = extract_document_quad(
            cleaned,
            epsilon_fraction=cfg.corner_epsilon_fraction,
            min_area=cfg.min_component_area,
        )
        grid = boundary_control_points(
            cleaned,
            corners,
            k=cfg.control_points_per_edge,
            along=cfg.control_points_along,
            min_area=cfg.min_component_area,
        )
    except (DegenerateMask, CornerNotOnContour) as e:
        return MrmOutcome(img, True, cleaned, 0.0, None, f"quad extraction failed: {e}")

    score = iou(cleaned, mask_from_control_grid(grid, img.size))
    if score < cfg.iou_skip_threshold:
        return MrmOutcome(img, True, cleaned, score, grid, "control-grid IoU below threshold")

    try:
        preliminary = tps_warp(img, grid, cfg.tps_regularization)
    except SingularSystem as e:
        return MrmOutcome(img, True, cleaned, score, grid, f"TPS fit failed: {e}")
    return MrmOutcome(preliminary, False, cleaned, score, grid)


class MarginRemovalStage(BaseStage):
    """
    Stage wrapper: segments the image when no external mask is supplied,
    then runs margin_removal and logs the outcome.
    """

    name = "Margin Removal"

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        super().__init__(merged(MRM_CONFIG, config))
        self.mrm_config = MrmConfig(**self.config)

    def process(self, img: Raster, mask: Optional[BinaryMask] = None) -> MrmOutcome:
        if mask is None:
            mask, _ = segment_document(img)
            self.log_interaction("segmented", {"document_pixels": mask.count()})
        else:
            self.log_interaction("external_mask", {"document_pixels": mask.count()})

        outcome = margin_removal(img, mask, self.mrm_config)
        self.log_interaction("margin_removal", outcome.summary())
        return outcome
