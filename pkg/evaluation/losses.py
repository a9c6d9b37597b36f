"""
Training objectives of both modules as plain functions over arrays.

MRM:  lambda * L_prior + L_mask + L_edge, with L_mask/L_edge binary
      cross-entropy and L_prior the adversarial shape prior over relabeled
      ground-truth masks.
ICRM: L_c + alpha * L_s, a content-weighted endpoint error plus a
      shift-invariant term.
No gradients are computed; these return loss values only.
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np

from config.dewarp_config import LOSS_CONFIG, merged
from imaging.errors import ConfigError, DimensionMismatch
from imaging.raster import BinaryMask, PathLike, check_same_size, luma, read_image
from imaging.warpfield import DisplacementFlow

RELABEL_FOREGROUND_FLOOR = 0.9
RELABEL_BACKGROUND_CEILING = 0.1


@dataclass(frozen=True, eq=False)
class SoftMask:
    """Per-pixel probabilities in [0, 1], stored (h, w)."""
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise ValueError(f"SoftMask needs a 2D array, got shape {values.shape}")
        if np.any(values < 0.0) or np.any(values > 1.0) or not np.all(np.isfinite(values)):
            raise ValueError("SoftMask values must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def size(self):
        return (self.width, self.height)

    @classmethod
    def from_mask(cls, mask: BinaryMask) -> "SoftMask":
        return cls(mask.bits.astype(np.float64))


@dataclass(frozen=True)
class LossConfig:
    alpha: float = LOSS_CONFIG["alpha"]
    beta: float = LOSS_CONFIG["beta"]
    lambda_prior: float = LOSS_CONFIG["lambda_prior"]
    clamp_eps: float = LOSS_CONFIG["clamp_eps"]

    def __post_init__(self):
        for name in ("alpha", "beta", "lambda_prior", "clamp_eps"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")

    @classmethod
    def from_dict(cls, overrides: Optional[Dict[str, Any]] = None) -> "LossConfig":
        return cls(**merged(LOSS_CONFIG, overrides))


def read_soft_mask(path: PathLike) -> SoftMask:
    """Read an 8-bit grayscale image as probabilities (value / 255)."""
    return SoftMask(luma(read_image(path)).data[:, :, 0])


def _clamped(p: np.ndarray, eps: float) -> np.ndarray:
    return np.clip(p, eps, 1.0 - eps)


# =========================================================================
# Margin removal objectives
# =========================================================================

def bce_loss(pred: SoftMask, gt: SoftMask, eps: float = LOSS_CONFIG["clamp_eps"]) -> float:
    """Mean binary cross-entropy with the prediction clamped to [eps, 1 - eps]."""
    check_same_size(pred, gt, "prediction and ground truth")
    p = _clamped(pred.values, eps)
    g = gt.values
    return float(-np.mean(g * np.log(p) + (1.0 - g) * np.log(1.0 - p)))


def prior_relabel(gt: SoftMask, pred: SoftMask) -> SoftMask:
    """Soften a one-hot mask toward the prediction: g=1 -> max(0.9, p), g=0 -> min(0.1, p)."""
    check_same_size(gt, pred, "ground truth and prediction")
    relabeled = np.where(
        gt.values >= 0.5,
        np.maximum(RELABEL_FOREGROUND_FLOOR, pred.values),
        np.minimum(RELABEL_BACKGROUND_CEILING, pred.values),
    )
    return SoftMask(relabeled)


def prior_loss(
    real_scores: Sequence[float],
    fake_scores: Sequence[float],
    eps: float = LOSS_CONFIG["clamp_eps"],
) -> float:
    """Discriminator objective mean(log D(real)) + mean(log(1 - D(fake)))."""
    real = np.asarray(real_scores, dtype=np.float64)
    fake = np.asarray(fake_scores, dtype=np.float64)
    if real.size == 0 or fake.size == 0:
        raise ValueError("prior_loss needs nonempty score lists")
    return float(np.mean(np.log(_clamped(real, eps))) + np.mean(np.log(1.0 - _clamped(fake, eps))))


def mrm_total(l_prior: float, l_mask: float, l_edge: float, lambda_prior: float = LOSS_CONFIG["lambda_prior"]) -> float:
    return lambda_prior * l_prior + l_mask + l_edge


# =========================================================================
# Content rectification objectives
# =========================================================================

def _residual(pred: DisplacementFlow, gt: DisplacementFlow) -> np.ndarray:
    check_same_size(pred, gt, "predicted and ground-truth flows")
    return gt.vectors - pred.vectors


def content_aware_loss(
    pred: DisplacementFlow,
    gt: DisplacementFlow,
    content: SoftMask,
    beta: float = LOSS_CONFIG["beta"],
) -> float:
    """Mean endpoint error, weighted by (1 + beta * m_c) per pixel."""
    if content.size != gt.size:
        raise DimensionMismatch(f"content mask is {content.size}, flows are {gt.size}")
    norms = np.hypot(*np.moveaxis(_residual(pred, gt), 2, 0))
    return float(np.mean(norms + beta * content.values * norms))


def shift_invariant_loss(pred: DisplacementFlow, gt: DisplacementFlow) -> float:
    """
    Sum over u and v of (1 / 2N^2) sum_ij ((d_i - d_j) - (p_i - p_j))^2.

    The pairwise sum equals the population variance of the residual channel,
    which is what gets computed.
    """
    residual = _residual(pred, gt).reshape(-1, 2)
    return float(np.var(residual[:, 0]) + np.var(residual[:, 1]))


def icrm_total(l_c: float, l_s: float, alpha: float = LOSS_CONFIG["alpha"]) -> float:
    return l_c + alpha * l_s
