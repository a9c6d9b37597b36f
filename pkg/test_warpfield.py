"""
Tests for displacement flows: sampling, accumulation, statistics and .flo files.
"""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from imaging.errors import BadMagic, DimensionMismatch, FlowFormatError
from imaging.raster import Raster
from imaging.warpfield import (
    DisplacementFlow,
    accumulate_compose,
    accumulate_sum,
    constant_flow,
    flow_stats,
    read_flow,
    rescale_vectors,
    sample,
    write_flow,
    zero_flow,
)
from tests.fixtures import random_flow, random_raster, smooth_page


def test_zero_flow_identity():
    """Sampling through the zero flow is bit-identical, for 20 random images."""
    print("=" * 60)
    print("TEST 1: Zero-Flow Sampling Identity")
    print("=" * 60)

    for seed in range(20):
        channels = 3 if seed % 2 else 1
        img = random_raster(seed, 17 + seed, 11 + 2 * seed, channels)
        out = sample(img, zero_flow(img.width, img.height))
        assert out.equals(img), f"seed {seed}: sampling with zero flow changed the image"
    print("[+] 20 images reproduced exactly")


def test_constant_shift():
    """An integer constant flow shifts the image and clamps at the border."""
    print("\n" + "=" * 60)
    print("TEST 2: Constant Shift")
    print("=" * 60)

    img = random_raster(3, 12, 8)
    out = sample(img, constant_flow(12, 8, 2.0, 0.0))
    assert np.array_equal(out.data[:, :10], img.data[:, 2:]), "out(x) = in(x + 2)"
    assert np.array_equal(out.data[:, 10:], np.repeat(img.data[:, 11:12], 2, axis=1)), "clamp to the last column"

    with pytest.raises(DimensionMismatch):
        sample(img, zero_flow(11, 8))
    print("[+] Shift and size checks passed")


def test_accumulation():
    """Sum is element-wise; compose matches sampling twice on smooth content."""
    print("\n" + "=" * 60)
    print("TEST 3: Flow Accumulation")
    print("=" * 60)

    a = random_flow(1, 6, 5)
    b = random_flow(2, 6, 5)
    assert np.array_equal(accumulate_sum(a, b).vectors, a.vectors + b.vectors), "sum accumulation"

    zero = zero_flow(6, 5)
    assert accumulate_compose(zero, a).equals(a), "compose onto zero keeps the new flow"
    assert accumulate_compose(a, zero).equals(a), "composing a zero step keeps the old flow"

    img = smooth_page(64, 48)
    c1 = constant_flow(64, 48, 1.5, -0.5)
    c2 = constant_flow(64, 48, -0.25, 1.0)
    once = sample(img, accumulate_compose(c1, c2))
    twice = sample(sample(img, c1), c2)
    interior = (slice(4, -4), slice(4, -4))
    error = np.abs(once.data[interior] - twice.data[interior]).max()
    print(f"\n  compose vs sequential sampling, max error: {error:.2e}")
    assert error < 1e-2, "composition approximates sequential resampling"


def test_compose_varying_flows():
    """Hand-evaluated 2x2 composition, then smooth spatially varying flows."""
    print("\n" + "=" * 60)
    print("TEST 4: Composition of Varying Flows")
    print("=" * 60)

    previous = DisplacementFlow(np.array([[[0.0, 1.0], [2.0, 1.0]],
                                          [[4.0, 3.0], [6.0, 3.0]]]))
    step = constant_flow(2, 2, 0.5, 0.5)
    # (0, 0) reads previous at (0.5, 0.5); (1, 1) reads (1.5, 1.5) clamped to (1, 1)
    expected = np.array([[[3.5, 2.5], [4.5, 2.5]],
                         [[5.5, 3.5], [6.5, 3.5]]])
    composed = accumulate_compose(previous, step)
    print(f"\n  2x2 composition: {composed.vectors.tolist()}")
    assert np.array_equal(composed.vectors, expected), "d(p) + c(p + d(p)) with clamped bilinear lookup"

    width, height = 96, 80
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    c = DisplacementFlow(np.stack([3.0 * np.sin(2 * np.pi * xs / 60.0) * np.cos(2 * np.pi * ys / 50.0),
                                   2.0 * np.cos(2 * np.pi * xs / 70.0)], axis=2))
    d = DisplacementFlow(np.stack([-2.0 * np.cos(2 * np.pi * ys / 45.0),
                                   2.5 * np.sin(2 * np.pi * (xs + ys) / 80.0)], axis=2))
    assert np.hypot(c.u, c.v).max() <= 4.0 and np.hypot(d.u, d.v).max() <= 4.0, "bounded test flows"

    img = smooth_page(width, height)
    once = sample(img, accumulate_compose(c, d))
    twice = sample(sample(img, c), d)
    interior = (slice(5, -5), slice(5, -5))
    error = np.abs(once.data[interior] - twice.data[interior]).max()
    print(f"  varying flows, max error: {error:.2e}")
    assert error <= 0.02, "composition matches sequential resampling away from the clamp zone"
    print("[+] Composition checks passed")


def test_flow_stats():
    print("\n" + "=" * 60)
    print("TEST 5: Flow Statistics")
    print("=" * 60)

    flow = constant_flow(4, 4, 3.0, 4.0)
    stats = flow_stats(flow)
    print(f"\n  constant (3, 4): variance={stats.variance}, mean magnitude={stats.mean_magnitude}")
    assert stats.mean_magnitude == 5.0, "mean |(3, 4)| is 5"
    assert stats.variance == pytest.approx(0.25), "pooled variance of {3, 4} values"
    assert flow_stats(zero_flow(3, 3)).variance == 0.0, "zero flow has zero variance"

    halves = np.zeros((4, 4, 2))
    halves[:, 2:, 0] = 2.0
    assert flow_stats(DisplacementFlow(halves)).variance == pytest.approx(0.75), "u half 0 / half 2, v = 0"

    # pooling over both components: a shift keeps the variance only when it moves u and v alike
    varied = random_flow(9, 6, 5)
    shifted = DisplacementFlow(varied.vectors + 7.5)
    assert flow_stats(shifted).variance == pytest.approx(flow_stats(varied).variance), "equal-component shift"

    scaled = rescale_vectors(flow, 2.0, 0.5)
    assert np.all(scaled.u == 6.0) and np.all(scaled.v == 2.0), "per-axis rescaling"


def test_flow_files(tmp_path):
    """Bit-exact round trip, the 60-byte 3x2 layout and malformed input."""
    print("\n" + "=" * 60)
    print("TEST 6: Flow Files")
    print("=" * 60)

    values = np.random.default_rng(7).normal(0, 10, (5, 7, 2)).astype(np.float32).astype(np.float64)
    flow = DisplacementFlow(values)
    write_flow(flow, tmp_path / "a.flo")
    assert read_flow(tmp_path / "a.flo").equals(flow), "float32-representable flows round-trip exactly"

    small = DisplacementFlow(np.arange(12, dtype=np.float64).reshape(2, 3, 2))
    write_flow(small, tmp_path / "small.flo")
    raw = (tmp_path / "small.flo").read_bytes()
    print(f"\n  3x2 flow file: {len(raw)} bytes")
    assert len(raw) == 60, "12-byte header + 3*2*2 float32"
    assert np.frombuffer(raw[:4], dtype="<f4")[0] == np.float32(202021.25), "magic"
    assert tuple(np.frombuffer(raw[4:12], dtype="<i4")) == (3, 2), "width then height"
    assert np.array_equal(np.frombuffer(raw[12:], dtype="<f4"), np.arange(12, dtype=np.float32)), "row-major (u, v)"

    bad = bytearray(raw)
    bad[0:4] = np.array([1.0], dtype="<f4").tobytes()
    (tmp_path / "bad.flo").write_bytes(bytes(bad))
    with pytest.raises(BadMagic):
        read_flow(tmp_path / "bad.flo")

    (tmp_path / "short.flo").write_bytes(raw[:40])
    with pytest.raises(FlowFormatError):
        read_flow(tmp_path / "short.flo")

    huge = raw[:4] + np.array([70000, 2], dtype="<i4").tobytes()
    (tmp_path / "huge.flo").write_bytes(huge)
    with pytest.raises(FlowFormatError):
        read_flow(tmp_path / "huge.flo")
    print("[+] Flow file checks passed")


def main():
    """Run all tests."""
    print("\n" + "=" * 60)
    print("Testing Warpfield")
    print("=" * 60 + "\n")

    test_zero_flow_identity()
    test_constant_shift()
    test_accumulation()
    test_compose_varying_flows()
    test_flow_stats()
    with tempfile.TemporaryDirectory() as tmp:
        test_flow_files(Path(tmp))

    print("\n" + "=" * 60)
    print("Warpfield Tests Complete!")
    print("=" * 60)


if __name__ == "__main__":
    main()
