"""
Connected components, outer-contour tracing and polygon filling on masks.
"""

from typing import List, Sequence, Tuple

import numpy as np
from scipy import ndimage

from imaging.raster import BinaryMask

Point = Tuple[float, float]

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)

# Moore neighbourhood, clockwise on screen (y grows downward), starting east
_DIRECTIONS = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]


def largest_component(mask: BinaryMask) -> BinaryMask:
    """Largest 8-connected foreground component (lowest label wins ties)."""
    labels, count = ndimage.label(mask.bits, structure=EIGHT_CONNECTED)
    if count == 0:
        return BinaryMask.empty(mask.width, mask.height)
    areas = np.bincount(labels.ravel())[1:]
    return BinaryMask(labels == (int(np.argmax(areas)) + 1))


def fill_holes(mask: BinaryMask) -> BinaryMask:
    return BinaryMask(ndimage.binary_fill_holes(mask.bits))


def trace_outer_contour(mask: BinaryMask) -> List[Tuple[int, int]]:
    """
    Outer boundary of the component containing the top-most, left-most pixel.

    Moore-neighbour tracing on 8-connectivity with Jacob's stopping rule.
    Returns pixel centres (x, y); the traced chain has positive shoelace
    area in (x, y), i.e. it runs east along the top edge first.
    """
    bits = np.pad(mask.bits, 1)
    rows, cols = np.nonzero(bits)
    if rows.size == 0:
        return []
    start = (int(cols[0]), int(rows[0]))

    def foreground(point):
        return bits[point[1], point[0]]

    contour = [start]
    current = start
    search_from = 4  # west of the start pixel is background
    first_move = None
    limit = 4 * int(rows.size) + 8

    for _ in range(limit):
        for turn in range(8):
            k = (search_from + turn) % 8
            dx, dy = _DIRECTIONS[k]
            candidate = (current[0] + dx, current[1] + dy)
            if foreground(candidate):
                break
        else:
            break  # isolated pixel

        if current == start and first_move is not None and k == first_move:
            break
        if first_move is None:
            first_move = k

        current = candidate
        contour.append(current)
        search_from = (k + 6) % 8 if k % 2 == 0 else (k + 5) % 8

    if len(contour) > 1 and contour[-1] == start:
        contour.pop()
    return [(x - 1, y - 1) for x, y in contour]


def polygon_area(points: Sequence[Point]) -> float:
    """Signed shoelace area."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return float(0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def fill_polygon(points: Sequence[Point], width: int, height: int) -> BinaryMask:
    """
    Scanline fill with the even-odd rule.

    A pixel is set when its centre lies inside; edges use the half-open
    rule y0 <= y < y1 so shared vertices are counted once.
    """
    bits = np.zeros((height, width), dtype=bool)
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 3:
        return BinaryMask(bits)

    x0, y0 = pts[:, 0], pts[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    spans = y0 != y1
    x0, y0, x1, y1 = x0[spans], y0[spans], x1[spans], y1[spans]
    lo, hi = np.minimum(y0, y1), np.maximum(y0, y1)

    column_centres = np.arange(width, dtype=np.float64)
    first_row = max(0, int(np.ceil(lo.min())) if lo.size else 0)
    last_row = min(height - 1, int(np.floor(hi.max())) if hi.size else -1)
    for row in range(first_row, last_row + 1):
        y = float(row)
        active = (lo <= y) & (y < hi)
        if not np.any(active):
            continue
        t = (y - y0[active]) / (y1[active] - y0[active])
        crossings = np.sort(x0[active] + t * (x1[active] - x0[active]))
        inside = np.zeros(width, dtype=bool)
        for left, right in zip(crossings[0::2], crossings[1::2]):
            inside |= (column_centres >= left) & (column_centres < right)
        bits[row] = inside
    return BinaryMask(bits)


def boundary(mask: BinaryMask) -> BinaryMask:
    """Foreground pixels with at least one 4-neighbour outside the mask."""
    eroded = ndimage.binary_erosion(mask.bits, border_value=0)
    return BinaryMask(mask.bits & ~eroded)
