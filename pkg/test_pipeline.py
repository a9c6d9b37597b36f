"""
End-to-end tests: synthetic distortion, margin removal, then iterative
rectification with an oracle predictor.
"""

import tempfile
import time
from pathlib import Path
from unittest import mock

import numpy as np

from coordination.pipeline_coordinator import DewarpCoordinator, RunReport, classify_error
from evaluation.metrics import estimate_dense_flow, local_distortion, ms_ssim
from imaging.errors import ConfigError, DimensionMismatch, FlowSizeMismatch, PredictorFailed
from imaging.raster import read_image, write_image, write_mask
from stages.content_rectification import IcrmConfig, run_icrm
from stages.margin_removal import MrmConfig, margin_removal
from stages.predictors import OraclePredictor, predictor_factory
from synth.generator import residual_after_mrm, synthesize


def test_two_stage_rectification():
    """Ten curled samples come out close to the flat page."""
    print("=" * 60)
    print("TEST 1: Margin Removal + Oracle Rectification")
    print("=" * 60)

    mrm_cfg = MrmConfig()
    icrm_cfg = IcrmConfig()
    started = time.perf_counter()
    for seed in range(10):
        synth_sample = synthesize(seed, curl_amplitude=(0.0, 8.0))
        outcome = margin_removal(synth_sample.distorted, synth_sample.doc_mask, mrm_cfg)
        assert not outcome.skipped, f"seed {seed}: {outcome.skip_reason}"

        residual, reference = residual_after_mrm(synth_sample, outcome.grid, mrm_cfg.tps_regularization)
        result = run_icrm(outcome.preliminary, OraclePredictor(residual, 0.7), icrm_cfg)

        before = ms_ssim(outcome.preliminary, reference)
        after = ms_ssim(result.final, reference)
        ld = local_distortion(estimate_dense_flow(result.final, reference, patch=16, search=8))
        print(f"  seed {seed}: ms_ssim {before:.4f} -> {after:.4f}, ld {ld:.3f}, "
              f"{result.trace.iterations} iterations ({result.trace.termination_reason.value})")
        assert after >= 0.95, f"seed {seed}: ms_ssim {after:.4f}"
        assert ld <= 1.5, f"seed {seed}: local distortion {ld:.3f}"

    elapsed = time.perf_counter() - started
    print(f"\n  total {elapsed:.1f} s")
    assert elapsed < 30.0, "ten samples within 30 s"


def test_coordinator_reports(tmp_path):
    print("\n" + "=" * 60)
    print("TEST 2: Coordinator Reports")
    print("=" * 60)

    synth_sample = synthesize(3, curl_amplitude=(0.0, 0.0))
    write_image(synth_sample.distorted, tmp_path / "page.png")
    write_mask(synth_sample.doc_mask, tmp_path / "page_mask.pgm")

    coordinator = DewarpCoordinator(predictor_factory("zero"), seed=3)
    report = coordinator.process_image(tmp_path / "page.png", tmp_path / "out", tmp_path / "page_mask.pgm")
    assert isinstance(report, RunReport) and report.success, report.error
    assert list(report.to_dict()) == ["input", "success", "error", "error_kind", "mrm", "icrm", "outputs",
                                      "ms_ssim", "seed", "wall_clock_ms"], "report key order"
    assert report.seed == 3 and report.ms_ssim is None, "seed carried, no reference given"
    assert not report.mrm["skipped"] and report.mrm["iou_score"] >= 0.96, "margin removal applied"
    assert report.icrm["termination_reason"] == "BelowTau", "zero predictor stops at once"
    assert read_image(report.outputs["image"]).size == tuple(report.mrm["output_size"]), "output frame"

    bypass = DewarpCoordinator(predictor_factory("zero"), skip_mrm=True)
    report = bypass.process_image(tmp_path / "page.png", tmp_path / "bypass")
    assert report.success and report.mrm["skipped"] and report.mrm["iou_score"] is None, "margin removal skipped"
    assert read_image(report.outputs["image"]).size == synth_sample.canvas_size, "input frame kept"

    report = coordinator.process_image(tmp_path / "page.png", tmp_path / "bad", tmp_path / "no_mask.pgm")
    assert not report.success and report.error_kind == "io" and report.outputs == {}, "missing mask"
    assert not (tmp_path / "bad").exists(), "nothing written on failure"

    with mock.patch("coordination.pipeline_coordinator.write_flow", side_effect=OSError("disk full")):
        report = bypass.process_image(tmp_path / "page.png", tmp_path / "full")
    assert not report.success and report.error_kind == "io", "failed flow write is an I/O error"
    assert list((tmp_path / "full").iterdir()) == [], "no image left behind without its flow"

    assert classify_error(FlowSizeMismatch("flow is (3, 3)")) == "predictor", "predicted flow of the wrong size"
    assert classify_error(DimensionMismatch("image and mask differ")) == "io", "mismatched inputs"
    assert classify_error(PredictorFailed("crashed")) == "predictor"
    assert classify_error(ConfigError("tau")) == "config"
    print("[+] Coordinator report checks passed")


def test_batch_order(tmp_path):
    print("\n" + "=" * 60)
    print("TEST 3: Batch Ordering")
    print("=" * 60)

    names = ["c.png", "a.png", "b.png"]
    for k, name in enumerate(names):
        write_image(synthesize(20 + k, page_size=(200, 200), canvas_size=(300, 300)).distorted, tmp_path / name)

    coordinator = DewarpCoordinator(predictor_factory("zero"))
    reports = coordinator.process_batch([tmp_path / n for n in names], tmp_path / "out", jobs=3)
    assert [Path(r.input).name for r in reports] == ["a.png", "b.png", "c.png"], "sorted by path"
    assert all(r.success for r in reports), [r.error for r in reports]
    sizes = [r.mrm["output_size"] for r in reports]
    assert all(np.all(np.array(s) > 0) for s in sizes), "every page rectified"


def main():
    """Run all tests."""
    print("\n" + "=" * 60)
    print("Testing Full Pipeline")
    print("=" * 60 + "\n")

    test_two_stage_rectification()
    for test in (test_coordinator_reports, test_batch_order):
        with tempfile.TemporaryDirectory() as tmp:
            test(Path(tmp))

    print("\n" + "=" * 60)
    print("Pipeline Tests Complete!")
    print("=" * 60)


if __name__ == "__main__":
    main()
