"""
Imaging Package
Raster/mask containers, displacement flows and their file formats.
"""

from imaging.raster import BinaryMask, Raster, bilinear_at, iou, read_image, write_image
from imaging.warpfield import DisplacementFlow, FlowStats, flow_stats, read_flow, sample, write_flow

__all__ = [
    'Raster', 'BinaryMask', 'bilinear_at', 'iou', 'read_image', 'write_image',
    'DisplacementFlow', 'FlowStats', 'sample', 'flow_stats', 'read_flow', 'write_flow',
]
