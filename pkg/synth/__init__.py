"""
Synth Package
Seeded synthetic documents with exact ground-truth backward maps.
"""

from synth.generator import (
    SynthSample,
    WarpParams,
    forward_map,
    generate_document,
    random_warp_params,
    residual_after_mrm,
    synthesize,
    warp_document,
    write_sample,
)
from synth.prng import SplitMix64

__all__ = [
    'SplitMix64', 'WarpParams', 'SynthSample', 'generate_document', 'warp_document',
    'random_warp_params', 'forward_map', 'residual_after_mrm', 'synthesize', 'write_sample',
]
