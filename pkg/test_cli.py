"""
Tests for the dewarp command line: outputs, JSON results and exit codes.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from cli.commands import EXIT_IO, EXIT_OK, EXIT_PREDICTOR, EXIT_USAGE
from imaging.raster import BinaryMask, read_image, write_mask
from imaging.warpfield import read_flow, write_flow
from tests.fixtures import random_flow, run_cli, run_cli_json


def _synth(tmp_path, seed, *extra):
    code, written = run_cli_json(["synth", "--seed", seed, "--out-dir", tmp_path / "synth", *extra])
    assert code == EXIT_OK, "synth should succeed"
    return written[0]


def test_synth_is_reproducible(tmp_path):
    print("=" * 60)
    print("TEST 1: Reproducible Synth Output")
    print("=" * 60)

    for run in ("a", "b"):
        code, written = run_cli_json(["synth", "--seed", 3, "--count", 2, "--out-dir", tmp_path / run])
        assert code == EXIT_OK and [w["seed"] for w in written] == [3, 4], "two consecutive seeds"
    first = sorted((tmp_path / "a").rglob("*.*"))
    second = sorted((tmp_path / "b").rglob("*.*"))
    print(f"\n  {len(first)} files per run")
    assert [p.relative_to(tmp_path / "a") for p in first] == [p.relative_to(tmp_path / "b") for p in second]
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes(), f"{a.name} differs between runs"
    assert (tmp_path / "a" / "sample_00003" / "params.json").exists(), "zero-padded sample directories"


def test_eval_and_losses(tmp_path):
    print("\n" + "=" * 60)
    print("TEST 2: eval and losses")
    print("=" * 60)

    entry = _synth(tmp_path, 1)
    files = entry["files"]
    code, result = run_cli_json(["eval", "--image", files["distorted"], "--reference", files["distorted"],
                                 "--search", 4])
    print(f"\n  eval identical: {result}")
    assert code == EXIT_OK and set(result) == {"ms_ssim", "ld"}, "image metrics only"
    assert abs(result["ms_ssim"] - 1.0) <= 1e-9 and result["ld"] == 0.0, "identical images"

    code, result = run_cli_json(["eval", "--mask", files["doc_mask"], "--reference-mask", files["doc_mask"]])
    assert result == {"iou": 1.0}, "identical masks"

    (tmp_path / "ocr.txt").write_text("docunent\n", encoding="utf-8")
    (tmp_path / "truth.txt").write_text("document\n", encoding="utf-8")
    code, result = run_cli_json(["eval", "--text", tmp_path / "ocr.txt", "--reference-text", tmp_path / "truth.txt"])
    assert result == {"cer": 1 / 8}, "one substitution in eight characters"

    code, result = run_cli_json(["losses", "--pred", files["gt"], "--gt", files["gt"], "--content", files["content_mask"]])
    assert code == EXIT_OK and result == {"l_c": 0.0, "l_s": 0.0, "total": 0.0}, "identical flows cost nothing"

    write_flow(random_flow(4, 400, 480), tmp_path / "pred.flo")
    code, result = run_cli_json(["losses", "--pred", tmp_path / "pred.flo", "--gt", files["gt"]])
    assert result["l_c"] > 0 and result["l_s"] > 0, "different flows cost something"
    assert abs(result["total"] - (result["l_c"] + 0.005 * result["l_s"])) < 1e-9, "default alpha"

    code, result = run_cli_json(["losses", "--pred-mask", files["doc_mask"], "--gt-mask", files["doc_mask"],
                                 "--pred-edge", files["edge_mask"], "--gt-edge", files["edge_mask"],
                                 "--relabel-out", tmp_path / "relabel.png"])
    assert code == EXIT_OK and result["l_mask"] < 1e-6 and result["l_edge"] < 1e-6, "perfect masks"
    relabeled = read_image(tmp_path / "relabel.png").data
    assert set(np.unique(np.rint(relabeled * 255))) <= {0.0, 255.0}, "one-hot prediction keeps 0 and 1"


def test_zero_predictor_matches_margin_removal(tmp_path):
    print("\n" + "=" * 60)
    print("TEST 3: Zero Predictor Output Equals Margin Removal")
    print("=" * 60)

    files = _synth(tmp_path, 2, "--max-amplitude", 0)["files"]
    code, mrm = run_cli_json(["mrm", files["distorted"], "--mask", files["doc_mask"], "--out-dir", tmp_path / "mrm"])
    assert code == EXIT_OK and not mrm["skipped"], "margin removal ran"

    code, report = run_cli_json(["dewarp", files["distorted"], "--mask", files["doc_mask"],
                                 "--predictor", "zero", "--out-dir", tmp_path / "dw"])
    print(f"\n  termination: {report['icrm']['termination_reason']}")
    assert code == EXIT_OK and report["success"], "pipeline succeeded"
    assert report["icrm"]["termination_reason"] == "BelowTau", "zero flow stops at once"
    assert list(report) == ["input", "success", "error", "error_kind", "mrm", "icrm", "outputs",
                            "ms_ssim", "seed", "wall_clock_ms"], "fixed report key order"
    dewarped = Path(report["outputs"]["image"]).read_bytes()
    assert dewarped == Path(mrm["outputs"]["preliminary"]).read_bytes(), "same image as margin removal"
    assert np.all(read_flow(report["outputs"]["flow"]).vectors == 0.0), "zero cumulative flow"
    assert Path(report["outputs"]["report"]).exists(), "report file written"


def test_oracle_on_residual(tmp_path):
    """synth --residual + oracle on the preliminary frame converges."""
    print("\n" + "=" * 60)
    print("TEST 4: Oracle Predictor End to End")
    print("=" * 60)

    entry = _synth(tmp_path, 5, "--residual")
    residual = entry["residual"]
    assert not residual["skipped"], residual
    code, report = run_cli_json(["dewarp", residual["preliminary"], "--skip-mrm",
                                 "--predictor", f"oracle:{residual['residual']}",
                                 "--reference", residual["reference"], "--out-dir", tmp_path / "dw"])
    print(f"\n  trace: {report['icrm']}\n  ms_ssim: {report['ms_ssim']}")
    assert code == EXIT_OK, report["error"]
    assert report["mrm"]["skip_reason"] == "margin removal disabled", "margin removal bypassed"
    assert report["icrm"]["termination_reason"] == "BelowTau", "oracle residual converges"
    assert report["ms_ssim"] >= 0.95, "rectified image matches the flat page"


def test_failures_and_exit_codes(tmp_path):
    print("\n" + "=" * 60)
    print("TEST 5: Failures and Exit Codes")
    print("=" * 60)

    code, report = run_cli_json(["dewarp", tmp_path / "missing.png", "--out-dir", tmp_path / "out"])
    assert code == EXIT_IO and not report["success"] and report["error_kind"] == "io", "missing input"
    assert report["outputs"] == {}, "no outputs recorded"
    assert not (tmp_path / "out").exists() or not any((tmp_path / "out").iterdir()), "no partial outputs"

    code, _ = run_cli(["dewarp", tmp_path / "missing.png", "--predictor", f"oracle:{tmp_path / 'none.flo'}"])
    assert code == EXIT_IO, "unreadable oracle ground truth is an I/O error"

    files = _synth(tmp_path, 6)["files"]
    code, report = run_cli_json(["dewarp", files["distorted"], "--skip-mrm", "--predictor", "external:false",
                                 "--out-dir", tmp_path / "ext"])
    assert code == EXIT_PREDICTOR and report["error_kind"] == "predictor", "failing external predictor"

    write_flow(random_flow(0, 10, 10), tmp_path / "small.flo")
    code, report = run_cli_json(["dewarp", files["distorted"], "--skip-mrm",
                                 "--predictor", f"oracle:{tmp_path / 'small.flo'}", "--out-dir", tmp_path / "dim"])
    assert code == EXIT_PREDICTOR, "flow size mismatch is a predictor failure"

    write_mask(BinaryMask.empty(60, 50), tmp_path / "small_mask.pgm")
    code, report = run_cli_json(["dewarp", files["distorted"], "--mask", tmp_path / "small_mask.pgm",
                                 "--out-dir", tmp_path / "mask"])
    assert code == EXIT_IO and report["error_kind"] == "io", "a wrong-size mask is an input error"
    code, _ = run_cli(["mrm", files["distorted"], "--mask", tmp_path / "small_mask.pgm", "--out-dir", tmp_path / "mask"])
    assert code == EXIT_IO, "mrm agrees on the exit code"

    usage_errors = [
        [],
        ["unwarp"],
        ["dewarp"],
        ["dewarp", files["distorted"], "--input-dir", tmp_path],
        ["dewarp", files["distorted"], "--predictor", "unet"],
        ["dewarp", files["distorted"], "--tau", 0],
        ["dewarp", files["distorted"], "--skip-mrm", "--mask", files["doc_mask"]],
        ["dewarp", files["distorted"], "--accumulate", "product"],
        ["synth", "--count", 0],
        ["eval", "--image", files["distorted"]],
        ["losses"],
    ]
    for argv in usage_errors:
        code, out = run_cli(argv)
        assert code == EXIT_USAGE, f"{argv}: expected exit 3, got {code}"
    print(f"\n  {len(usage_errors)} bad invocations rejected with exit 3")


def test_batch_mode(tmp_path):
    """Reports are the same for one or two workers."""
    print("\n" + "=" * 60)
    print("TEST 6: Batch Mode")
    print("=" * 60)

    inputs = tmp_path / "inputs"
    inputs.mkdir()
    for seed in range(3):
        files = _synth(tmp_path, 10 + seed)["files"]
        (inputs / f"page_{seed}.png").write_bytes(Path(files["distorted"]).read_bytes())
    (inputs / "notes.txt").write_text("not an image\n")

    batches = []
    for jobs in (1, 2):
        out = tmp_path / f"out_{jobs}"
        code, summary = run_cli_json(["dewarp", "--input-dir", inputs, "--jobs", jobs, "--out-dir", out])
        assert code == EXIT_OK and summary["images"] == 3 and summary["succeeded"] == 3, f"jobs={jobs}: {summary}"
        batch = json.loads((out / "batch_report.json").read_text())
        for report in batch:
            report.pop("wall_clock_ms")
            report["outputs"] = {k: Path(v).name for k, v in report["outputs"].items()}
        batches.append(batch)
        assert sorted(p.name for p in out.glob("*_dewarped.png")) == [f"page_{s}_dewarped.png" for s in range(3)]

    assert [Path(r["input"]).name for r in batches[0]] == ["page_0.png", "page_1.png", "page_2.png"], "sorted"
    assert batches[0] == batches[1], "job count does not change the results"


def main():
    """Run all tests."""
    print("\n" + "=" * 60)
    print("Testing Command Line")
    print("=" * 60 + "\n")

    for test in (test_synth_is_reproducible, test_eval_and_losses, test_zero_predictor_matches_margin_removal,
                 test_oracle_on_residual, test_failures_and_exit_codes, test_batch_mode):
        with tempfile.TemporaryDirectory() as tmp:
            test(Path(tmp))

    print("\n" + "=" * 60)
    print("Command Line Tests Complete!")
    print("=" * 60)


if __name__ == "__main__":
    main()
