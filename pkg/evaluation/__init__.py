"""
Evaluation Package
Training losses and image/text metrics, all as pure functions.
"""

from evaluation.losses import (
    LossConfig,
    SoftMask,
    bce_loss,
    content_aware_loss,
    icrm_total,
    mrm_total,
    prior_loss,
    prior_relabel,
    shift_invariant_loss,
)
from evaluation.metrics import MsSsimParams, cer, estimate_dense_flow, local_distortion, ms_ssim, ssim

__all__ = [
    'SoftMask', 'LossConfig', 'bce_loss', 'prior_relabel', 'prior_loss',
    'content_aware_loss', 'shift_invariant_loss', 'icrm_total', 'mrm_total',
    'MsSsimParams', 'ms_ssim', 'ssim', 'local_distortion', 'estimate_dense_flow', 'cer',
]
