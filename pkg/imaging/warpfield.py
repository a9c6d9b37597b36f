"""
Warpfield - displacement flows and the sampling procedure.

Convention: backward sampling. Output pixel p reads the input at
p + flow(p), so a flow is directly a resampling map.

Flow files use the Middlebury layout:
    float32 202021.25 | int32 width | int32 height | w*h interleaved (u, v) float32
all little-endian, row-major.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from imaging.errors import BadMagic, FlowFormatError, FlowSizeMismatch
from imaging.raster import Raster, bilinear_sample, check_same_size

PathLike = Union[str, Path]

FLOW_MAGIC = np.float32(202021.25)
MAX_FLOW_SIDE = 2 ** 16
_HEADER_BYTES = 12


@dataclass(frozen=True, eq=False)
class DisplacementFlow:
    """Per-pixel (du, dv) field in pixels, stored as a (h, w, 2) array."""
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64, copy=True)
        if vectors.ndim != 3 or vectors.shape[2] != 2:
            raise ValueError(f"Flow needs shape (h, w, 2), got {vectors.shape}")
        if vectors.shape[0] == 0 or vectors.shape[1] == 0:
            raise ValueError("Flow must be nonempty")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("Flow components must be finite")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def size(self):
        return (self.width, self.height)

    @property
    def u(self) -> np.ndarray:
        return self.vectors[:, :, 0]

    @property
    def v(self) -> np.ndarray:
        return self.vectors[:, :, 1]

    def equals(self, other: "DisplacementFlow") -> bool:
        return self.vectors.shape == other.vectors.shape and bool(np.array_equal(self.vectors, other.vectors))

    def scaled(self, factor: float) -> "DisplacementFlow":
        return DisplacementFlow(self.vectors * factor)


@dataclass(frozen=True)
class FlowStats:
    variance: float
    mean_magnitude: float


def zero_flow(width: int, height: int) -> DisplacementFlow:
    return DisplacementFlow(np.zeros((height, width, 2)))


def constant_flow(width: int, height: int, du: float, dv: float) -> DisplacementFlow:
    vectors = np.empty((height, width, 2))
    vectors[:, :, 0] = du
    vectors[:, :, 1] = dv
    return DisplacementFlow(vectors)


def pixel_grid(width: int, height: int):
    """Pixel-centre coordinate arrays (xs, ys), each (h, w)."""
    ys, xs = np.mgrid[0:height, 0:width]
    return xs.astype(np.float64), ys.astype(np.float64)


def sample(img: Raster, flow: DisplacementFlow) -> Raster:
    """S(img, flow): out(p) = bilinear(img, p + flow(p)), clamp-to-edge."""
    check_same_size(img, flow, "image and flow")
    xs, ys = pixel_grid(flow.width, flow.height)
    return Raster(bilinear_sample(img.data, xs + flow.u, ys + flow.v))


def accumulate_sum(cumulative: DisplacementFlow, d_new: DisplacementFlow) -> DisplacementFlow:
    """Element-wise sum of two flows (first-order accumulation)."""
    check_same_size(cumulative, d_new, "flows")
    return DisplacementFlow(cumulative.vectors + d_new.vectors)


def accumulate_compose(cumulative_prev: DisplacementFlow, d_new: DisplacementFlow) -> DisplacementFlow:
    """
    Exact backward-map composition.

    out(p) = d_new(p) + cumulative_prev(p + d_new(p)), so that
    S(I, out) == S(S(I, cumulative_prev), d_new) up to interpolation error.
    """
    check_same_size(cumulative_prev, d_new, "flows")
    xs, ys = pixel_grid(d_new.width, d_new.height)
    carried = bilinear_sample(cumulative_prev.vectors, xs + d_new.u, ys + d_new.v)
    return DisplacementFlow(d_new.vectors + carried)


def rescale_vectors(flow: DisplacementFlow, sx: float, sy: float) -> DisplacementFlow:
    """Scale u by sx and v by sy (resolution change of the vector units)."""
    return DisplacementFlow(flow.vectors * np.array([sx, sy]))


def flow_stats(flow: DisplacementFlow) -> FlowStats:
    """Population variance pooled over both components, and mean vector norm."""
    return FlowStats(
        variance=float(np.var(flow.vectors)),
        mean_magnitude=float(np.mean(np.hypot(flow.u, flow.v))),
    )


# =========================================================================
# Flow file I/O
# =========================================================================

def write_flow(flow: DisplacementFlow, path: PathLike):
    """Write a flow in the binary .flo layout."""
    header = np.array([FLOW_MAGIC], dtype="<f4").tobytes()
    header += np.array([flow.width, flow.height], dtype="<i4").tobytes()
    body = np.ascontiguousarray(flow.vectors, dtype="<f4").tobytes()
    Path(path).write_bytes(header + body)


def read_flow(path: PathLike) -> DisplacementFlow:
    """Read a .flo file; raises BadMagic or FlowFormatError on malformed input."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER_BYTES:
        raise FlowFormatError(f"{path}: file shorter than the 12-byte header")
    magic = np.frombuffer(raw, dtype="<f4", count=1)[0]
    if magic != FLOW_MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    width, height = (int(v) for v in np.frombuffer(raw, dtype="<i4", count=2, offset=4))
    if not (0 < width <= MAX_FLOW_SIDE and 0 < height <= MAX_FLOW_SIDE):
        raise FlowFormatError(f"{path}: dimensions {width}x{height} out of range")
    expected = _HEADER_BYTES + width * height * 2 * 4
    if len(raw) < expected:
        raise FlowFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", count=width * height * 2, offset=_HEADER_BYTES)
    return DisplacementFlow(data.reshape(height, width, 2).astype(np.float64))


def check_flow_matches(flow: DisplacementFlow, img: Raster, what: str = "flow"):
    if flow.size != img.size:
        raise FlowSizeMismatch(f"{what} is {flow.size}, image is {img.size}")
