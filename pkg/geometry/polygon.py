"""
Polygon simplification, document quadrilateral extraction and
boundary control-point selection for the mask-based dewarper.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from geometry.contour import fill_polygon, largest_component, polygon_area, trace_outer_contour
from imaging.errors import CornerNotOnContour, DegenerateMask
from imaging.raster import BinaryMask

Point = Tuple[float, float]

MIN_OUTPUT_SIDE = 64
MAX_OUTPUT_SIDE = 4096
CORNER_TOLERANCE = 2.0


@dataclass(frozen=True)
class ControlGrid:
    """
    Matched boundary points: source on the distorted document, target on
    the output rectangle. Order: TL, top edge, TR, right edge, BR, bottom
    edge, BL, left edge.
    """
    source_points: Tuple[Point, ...]
    target_points: Tuple[Point, ...]
    output_size: Tuple[int, int]

    def __post_init__(self):
        if len(self.source_points) != len(self.target_points):
            raise ValueError("source and target point lists differ in length")

    def to_dict(self):
        return {
            "source_points": [list(p) for p in self.source_points],
            "target_points": [list(p) for p in self.target_points],
            "output_size": list(self.output_size),
        }


# =========================================================================
# Douglas-Peucker
# =========================================================================

def point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance of each point to the closed segment ab."""
    ab = b - a
    length_sq = float(np.dot(ab, ab))
    if length_sq == 0.0:
        return np.hypot(points[:, 0] - a[0], points[:, 1] - a[1])
    t = np.clip(((points - a) @ ab) / length_sq, 0.0, 1.0)
    nearest = a + t[:, None] * ab
    return np.hypot(points[:, 0] - nearest[:, 0], points[:, 1] - nearest[:, 1])


def _douglas_peucker_indices(pts: np.ndarray, epsilon: float) -> List[int]:
    """Indices retained from an open chain (iterative anchor/floater stack)."""
    last = len(pts) - 1
    keep = np.zeros(len(pts), dtype=bool)
    keep[0] = keep[last] = True
    stack = [(0, last)]
    while stack:
        anchor, floater = stack.pop()
        if floater - anchor < 2:
            continue
        distances = point_segment_distance(pts[anchor + 1:floater], pts[anchor], pts[floater])
        farthest = int(np.argmax(distances))
        if distances[farthest] > epsilon:
            split = anchor + 1 + farthest
            keep[split] = True
            stack.append((split, floater))
            stack.append((anchor, split))
    return [int(i) for i in np.nonzero(keep)[0]]


def farthest_pair(pts: np.ndarray) -> Tuple[int, int]:
    """Indices (i < j) of the two mutually farthest vertices, first in row-major order."""
    best, pair = -1.0, (0, len(pts) - 1)
    for i in range(len(pts) - 1):
        d = np.hypot(pts[i + 1:, 0] - pts[i, 0], pts[i + 1:, 1] - pts[i, 1])
        j = int(np.argmax(d))
        if d[j] > best:
            best, pair = float(d[j]), (i, i + 1 + j)
    return pair


def simplify_polygon(points: Sequence[Point], epsilon: float, closed: bool = False) -> List[Point]:
    """
    Douglas-Peucker simplification.

    Every retained vertex is an input vertex and every removed vertex lies
    within epsilon of the simplified chain. Closed contours are split at
    their two mutually farthest vertices, each half is simplified and the
    halves are merged back in input order.
    """
    if len(points) == 0:
        raise ValueError("simplify_polygon needs at least one point")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    pts = np.asarray(points, dtype=np.float64)
    if epsilon == 0 or len(pts) < 3:
        return [tuple(p) for p in points]

    if not closed:
        return [tuple(points[i]) for i in _douglas_peucker_indices(pts, epsilon)]

    i, j = farthest_pair(pts)
    first = [i + k for k in _douglas_peucker_indices(pts[i:j + 1], epsilon)]
    wrapped = np.concatenate([pts[j:], pts[:i + 1]])
    second = [(j + k) % len(pts) for k in _douglas_peucker_indices(wrapped, epsilon)]
    retained = sorted(set(first) | set(second))
    return [tuple(points[k]) for k in retained]


# =========================================================================
# Corner detection
# =========================================================================

def contour_length(contour: Sequence[Point], closed: bool = True) -> float:
    pts = np.asarray(contour, dtype=np.float64)
    if len(pts) < 2:
        return 0.0
    steps = np.diff(np.vstack([pts, pts[:1]]) if closed else pts, axis=0)
    return float(np.hypot(steps[:, 0], steps[:, 1]).sum())


def reduce_to_quad(vertices: List[Point]) -> List[Point]:
    """Drop the vertex whose removal changes the polygon area least until four remain."""
    verts = list(vertices)
    while len(verts) > 4:
        n = len(verts)
        costs = []
        for k in range(n):
            triangle = (verts[k - 1], verts[k], verts[(k + 1) % n])
            costs.append(abs(polygon_area(triangle)))
        del verts[int(np.argmin(costs))]
    return verts


def order_corners(quad: List[Point]) -> List[Point]:
    """
    Rotate a contour-ordered quad so it reads TL, TR, BR, BL.

    TL is the vertex minimising x + y relative to the centroid (ties: smaller
    y, then smaller x); the remaining corners follow the contour direction,
    which runs TL -> TR along the top edge.
    """
    pts = np.asarray(quad, dtype=np.float64)
    centre = pts.mean(axis=0)
    rel = pts - centre
    keys = [(rel[k, 0] + rel[k, 1], pts[k, 1], pts[k, 0]) for k in range(len(pts))]
    top_left = min(range(len(pts)), key=lambda k: keys[k])
    if polygon_area(quad) < 0:
        quad = quad[::-1]
        top_left = len(quad) - 1 - top_left
    return [tuple(quad[(top_left + k) % 4]) for k in range(4)]


def _document_contour(mask: BinaryMask, min_area: int) -> List[Tuple[int, int]]:
    component = largest_component(mask)
    if component.count() < min_area:
        raise DegenerateMask(f"largest component has {component.count()} px (< {min_area})")
    return trace_outer_contour(component)


def extract_document_quad(
    mask: BinaryMask,
    epsilon: Optional[float] = None,
    epsilon_fraction: float = 0.02,
    min_area: int = 64,
) -> List[Point]:
    """
    Four ordered corners (TL, TR, BR, BL) of the largest mask component.

    epsilon defaults to epsilon_fraction x contour perimeter.
    """
    contour = _document_contour(mask, min_area)
    if epsilon is None:
        epsilon = epsilon_fraction * contour_length(contour)
    vertices = simplify_polygon(contour, epsilon, closed=True)
    if len(vertices) > 4:
        vertices = reduce_to_quad(vertices)
    if len(set(vertices)) < 4:
        raise DegenerateMask(f"only {len(set(vertices))} distinct corner(s) survive simplification")
    if abs(polygon_area(vertices)) == 0.0:
        raise DegenerateMask("corner quadrilateral has zero area")
    return [(float(x), float(y)) for x, y in order_corners(vertices)]


# =========================================================================
# Control points
# =========================================================================

def _locate(contour: np.ndarray, corner: Point) -> int:
    d = np.hypot(contour[:, 0] - corner[0], contour[:, 1] - corner[1])
    k = int(np.argmin(d))
    if d[k] > CORNER_TOLERANCE:
        raise CornerNotOnContour(f"corner {corner} is {d[k]:.2f} px from the contour")
    return k


def _arc(contour: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Contour vertices from start to stop inclusive, walking forward cyclically."""
    if stop >= start:
        return contour[start:stop + 1]
    return np.vstack([contour[start:], contour[:stop + 1]])


def _equidistant(chain: np.ndarray, k: int) -> Tuple[List[Point], float]:
    """k points at equal arc length strictly inside the chain, and the chain length."""
    steps = np.hypot(*np.diff(chain, axis=0).T) if len(chain) > 1 else np.zeros(0)
    cumulative = np.concatenate([[0.0], np.cumsum(steps)])
    total = float(cumulative[-1])
    points = []
    for j in range(1, k + 1):
        s = total * j / (k + 1)
        x = float(np.interp(s, cumulative, chain[:, 0]))
        y = float(np.interp(s, cumulative, chain[:, 1]))
        points.append((x, y))
    return points, total


def _clamp_side(length: float) -> int:
    return int(min(MAX_OUTPUT_SIDE, max(MIN_OUTPUT_SIDE, round(length))))


def boundary_control_points(
    mask: BinaryMask,
    corners: Sequence[Point],
    k: int = 3,
    along: str = "contour",
    min_area: int = 64,
) -> ControlGrid:
    """
    4 + 4k boundary points matched to an output rectangle.

    along="contour" spaces the k points per edge by arc length on the traced
    (unsimplified) contour; along="polygon" spaces them on the straight
    corner-to-corner edges.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if len(corners) != 4:
        raise ValueError("exactly four corners are required")
    corners = [tuple(map(float, c)) for c in corners]

    if along == "contour":
        contour = np.asarray(_document_contour(mask, min_area), dtype=np.float64)
        indices = [_locate(contour, c) for c in corners]
        chains = [_arc(contour, indices[e], indices[(e + 1) % 4]) for e in range(4)]
        # Pin the chain ends to the corners themselves
        chains = [np.vstack([[corners[e]], chain[1:-1], [corners[(e + 1) % 4]]]) if len(chain) > 1
                  else np.array([corners[e], corners[(e + 1) % 4]]) for e, chain in enumerate(chains)]
    elif along == "polygon":
        chains = [np.array([corners[e], corners[(e + 1) % 4]]) for e in range(4)]
    else:
        raise ValueError(f"unknown control point placement: {along}")

    edge_points, lengths = zip(*(_equidistant(chain, k) for chain in chains))
    width = _clamp_side((lengths[0] + lengths[2]) / 2.0)
    height = _clamp_side((lengths[1] + lengths[3]) / 2.0)

    right, bottom = float(width - 1), float(height - 1)
    fractions = [j / (k + 1) for j in range(1, k + 1)]
    target_edges = [
        [(right * f, 0.0) for f in fractions],
        [(right, bottom * f) for f in fractions],
        [(right * (1 - f), bottom) for f in fractions],
        [(0.0, bottom * (1 - f)) for f in fractions],
    ]
    target_corners = [(0.0, 0.0), (right, 0.0), (right, bottom), (0.0, bottom)]

    source, target = [], []
    for e in range(4):
        source.append(corners[e])
        source.extend(edge_points[e])
        target.append(target_corners[e])
        target.extend(target_edges[e])
    return ControlGrid(tuple(source), tuple(target), (width, height))


def mask_from_control_grid(grid: ControlGrid, canvas: Tuple[int, int]) -> BinaryMask:
    """Even-odd fill of the polygon through the grid's source points."""
    width, height = canvas
    return fill_polygon(grid.source_points, width, height)
