"""
Geometry Package
Contours, polygon simplification, control grids and thin-plate splines.
"""

from geometry.contour import fill_polygon, largest_component, polygon_area, trace_outer_contour
from geometry.polygon import (
    ControlGrid,
    boundary_control_points,
    extract_document_quad,
    mask_from_control_grid,
    simplify_polygon,
)
from geometry.tps import TpsTransform, tps_fit, tps_warp

__all__ = [
    'ControlGrid', 'TpsTransform',
    'simplify_polygon', 'extract_document_quad', 'boundary_control_points',
    'mask_from_control_grid', 'tps_fit', 'tps_warp',
    'trace_outer_contour', 'largest_component', 'fill_polygon', 'polygon_area',
]
