"""
This defines the default hyperparameters for every stage of the dewarping pipeline

Hyperparameters:
- MRM_CONFIG: margin removal (IoU skip threshold, control points per edge, corner epsilon, TPS regularization)
- ICRM_CONFIG: iterative content rectification (tau, iteration cap, accumulation mode, variance resolution)
- LOSS_CONFIG: loss weights (alpha, beta, lambda_prior) and the probability clamp
- MS_SSIM_CONFIG: scale weights and Gaussian window of the structural similarity metrics
- BLOCK_MATCHING_CONFIG: patch and search radius of the dense flow estimator
- SYNTH_CONFIG: page/canvas sizes and warp ranges of the synthetic generator
- SYSTEM_CONFIG: logging, external predictor timeout, batch parallelism

Values marked "published" are the tuned constants of the method;
everything else is an implementation choice recorded in DESIGN.md.
"""

import os
from typing import Any, Dict

from dotenv import load_dotenv

load_dotenv()


# Margin Removal Module
MRM_CONFIG = {
    "iou_skip_threshold": 0.96,  # published
    "control_points_per_edge": 3,  # published
    "corner_epsilon_fraction": 0.02,  # x contour perimeter
    "tps_regularization": 1e-3,
    "control_points_along": "contour",  # or "polygon"
    "min_component_area": 64,
}

# Iterative Content Rectification Module
ICRM_CONFIG = {
    "tau": 60.0,  # published, pixels^2 at working_resolution
    "max_iters": 8,
    "accumulation": "sum",  # or "compose"
    "working_resolution": (1024, 960),
    "adaptive": True,  # False runs exactly max_iters iterations
    "include_rejected": False,  # keep the flow that triggered the variance rule
}

LOSS_CONFIG = {
    "alpha": 0.005,  # published
    "beta": 3.0,  # published
    "lambda_prior": 0.01,  # unpublished, placeholder
    "clamp_eps": 1e-7,
}

MS_SSIM_CONFIG = {
    "scale_weights": (0.0448, 0.2856, 0.3001, 0.2363, 0.1333),
    "window": 11,
    "sigma": 1.5,
    "k1": 0.01,
    "k2": 0.03,
}

BLOCK_MATCHING_CONFIG = {
    "patch": 16,
    "search": 24,
}

SYNTH_CONFIG = {
    "page_size": (256, 320),
    "canvas_size": (400, 480),
    "margin_fraction": 0.08,
    "max_corner_jitter": 0.06,  # fraction of page size
    "curl_amplitude": (0.0, 8.0),
    "curl_frequency": (0.5, 1.5),
    "margin_textures": ("solid", "checker", "noise"),
}


SYSTEM_CONFIG = {
    "log_level": os.getenv("DEWARP_LOG_LEVEL", "WARNING"),
    "enable_logging": True,
    "external_predictor_timeout_seconds": float(os.getenv("DEWARP_PREDICTOR_TIMEOUT", "120")),
    "max_jobs": int(os.getenv("DEWARP_JOBS", "1")),
}


def merged(defaults: Dict[str, Any], overrides: Dict[str, Any] = None) -> Dict[str, Any]:
    """Copy of a default dict with the non-None overrides applied."""
    result = dict(defaults)
    for key, value in (overrides or {}).items():
        if key not in defaults:
            raise KeyError(f"Unknown config key: {key}")
        if value is not None:
            result[key] = value
    return result
