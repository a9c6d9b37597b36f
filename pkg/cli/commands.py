"""
Command-line front end.

    dewarp  <image> | --input-dir DIR   full pipeline (--skip-mrm: rectification only)
    mrm     <image>                     margin removal only
    synth   --seed N                    synthetic samples with ground truth
    eval    --image A --reference B     ms_ssim / ld (or iou, cer)
    losses  --pred P.flo --gt G.flo     training loss values

Results go to stdout as JSON, diagnostics to stderr.
Exit codes: 0 ok, 1 I/O or format, 2 predictor failure, 3 bad arguments.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from config.dewarp_config import BLOCK_MATCHING_CONFIG, LOSS_CONFIG, MRM_CONFIG, SYNTH_CONFIG, SYSTEM_CONFIG
from coordination.pipeline_coordinator import (
    ERROR_CONFIG,
    ERROR_PREDICTOR,
    DewarpCoordinator,
)
from evaluation.losses import (
    SoftMask,
    bce_loss,
    content_aware_loss,
    icrm_total,
    mrm_total,
    prior_relabel,
    read_soft_mask,
    shift_invariant_loss,
)
from evaluation.metrics import cer, estimate_dense_flow, local_distortion, ms_ssim, ssim
from imaging.errors import ConfigError, PredictorFailed
from imaging.raster import Raster, iou, read_image, read_mask, write_image, write_mask
from imaging.warpfield import read_flow, write_flow
from stages.margin_removal import MarginRemovalStage
from stages.predictors import predictor_factory
from synth.generator import residual_after_mrm, synthesize, write_sample

logger = logging.getLogger("dewarp.cli")

EXIT_OK = 0
EXIT_IO = 1
EXIT_PREDICTOR = 2
EXIT_USAGE = 3

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm", ".pnm")


class UsageError(Exception):
    """Bad command-line arguments."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(payload: Any):
    print(json.dumps(payload, indent=2))


def exit_code_for(error: Exception) -> int:
    if isinstance(error, (UsageError, ConfigError, KeyError)):
        return EXIT_USAGE
    if isinstance(error, PredictorFailed):
        return EXIT_PREDICTOR
    return EXIT_IO


def _mrm_overrides(args) -> Dict[str, Any]:
    return {
        "iou_skip_threshold": args.iou_threshold,
        "control_points_per_edge": args.points_per_edge,
    }


# =========================================================================
# dewarp
# =========================================================================

def cmd_dewarp(args) -> int:
    if (args.input is None) == (args.input_dir is None):
        raise UsageError("give exactly one of <image> or --input-dir")
    if args.input_dir is not None and (args.mask or args.reference):
        raise UsageError("--mask and --reference apply to a single image only")
    if args.skip_mrm and (args.mask or args.iou_threshold is not None or args.points_per_edge is not None):
        raise UsageError("--skip-mrm cannot be combined with margin removal options")

    icrm_overrides = {
        "tau": args.tau,
        "max_iters": args.max_iters,
        "accumulation": args.accumulate,
        "adaptive": False if args.fixed_iters else None,
        "include_rejected": True if args.include_rejected else None,
    }
    coordinator = DewarpCoordinator(
        predictor_factory(args.predictor),
        mrm_config=_mrm_overrides(args),
        icrm_config=icrm_overrides,
        seed=args.seed,
        skip_mrm=args.skip_mrm,
    )

    if args.input is not None:
        report = coordinator.process_image(args.input, args.out_dir, args.mask, args.reference)
        _emit(report.to_dict())
        return _report_exit_code([report])

    input_dir = Path(args.input_dir)
    if not input_dir.is_dir():
        raise FileNotFoundError(f"input directory not found: {input_dir}")
    images = [p for p in input_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES]
    reports = coordinator.process_batch(images, args.out_dir, args.jobs)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    batch = [r.to_dict() for r in reports]
    (out_dir / "batch_report.json").write_text(json.dumps(batch, indent=2) + "\n")
    _emit({
        "images": len(reports),
        "succeeded": sum(r.success for r in reports),
        "report": str(out_dir / "batch_report.json"),
    })
    return _report_exit_code(reports)


def _report_exit_code(reports) -> int:
    for report in reports:
        if not report.success:
            if report.error_kind == ERROR_PREDICTOR:
                return EXIT_PREDICTOR
            if report.error_kind == ERROR_CONFIG:
                return EXIT_USAGE
            return EXIT_IO
    return EXIT_OK


# =========================================================================
# mrm
# =========================================================================

def cmd_mrm(args) -> int:
    img = read_image(args.input)
    mask = read_mask(args.mask) if args.mask else None
    outcome = MarginRemovalStage(_mrm_overrides(args)).process(img, mask)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.input).stem
    outputs = {
        "preliminary": str(out_dir / f"{stem}_preliminary.png"),
        "mask": str(out_dir / f"{stem}_mask.pgm"),
        "report": str(out_dir / f"{stem}_mrm.json"),
    }
    summary = {**outcome.summary(), "grid": outcome.grid.to_dict() if outcome.grid else None, "outputs": outputs}
    write_image(outcome.preliminary, outputs["preliminary"])
    write_mask(outcome.mask_used, outputs["mask"])
    Path(outputs["report"]).write_text(json.dumps(summary, indent=2) + "\n")
    _emit(summary)
    return EXIT_OK


# =========================================================================
# synth
# =========================================================================

def _write_residual(sample, directory: Path) -> Dict[str, Any]:
    stage = MarginRemovalStage()
    outcome = stage.process(sample.distorted, sample.doc_mask)
    if outcome.skipped:
        return {"skipped": True, "skip_reason": outcome.skip_reason}
    residual, reference = residual_after_mrm(sample, outcome.grid, stage.mrm_config.tps_regularization)
    paths = {
        "preliminary": str(directory / "preliminary.png"),
        "residual": str(directory / "residual.flo"),
        "reference": str(directory / "reference.png"),
    }
    write_image(outcome.preliminary, paths["preliminary"])
    write_flow(residual, paths["residual"])
    write_image(reference, paths["reference"])
    return {"skipped": False, **paths}


def cmd_synth(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    overrides = {}
    if args.max_amplitude is not None:
        if args.max_amplitude < 0:
            raise UsageError("--max-amplitude must be >= 0")
        overrides["curl_amplitude"] = (0.0, args.max_amplitude)
    if args.margin_fraction is not None:
        overrides["margin_fraction"] = args.margin_fraction

    written: List[Dict[str, Any]] = []
    for seed in range(args.seed, args.seed + args.count):
        sample = synthesize(seed, tuple(args.page_size), tuple(args.canvas_size), **overrides)
        directory = Path(args.out_dir) / f"sample_{seed:05d}"
        entry = {"seed": seed, "files": write_sample(sample, directory)}
        if args.residual:
            entry["residual"] = _write_residual(sample, directory)
        written.append(entry)
    _emit(written)
    return EXIT_OK


# =========================================================================
# eval
# =========================================================================

def cmd_eval(args) -> int:
    result: Dict[str, float] = {}
    if args.image or args.reference:
        if not (args.image and args.reference):
            raise UsageError("--image and --reference go together")
        image, reference = read_image(args.image), read_image(args.reference)
        result["ms_ssim"] = ms_ssim(image, reference)
        if args.flow:
            correspondence = read_flow(args.flow)
        else:
            correspondence = estimate_dense_flow(image, reference, args.patch, args.search)
        result["ld"] = local_distortion(correspondence)
        if args.with_ssim:
            result["ssim"] = ssim(image, reference)
    if args.mask or args.reference_mask:
        if not (args.mask and args.reference_mask):
            raise UsageError("--mask and --reference-mask go together")
        result["iou"] = iou(read_mask(args.mask), read_mask(args.reference_mask))
    if args.text or args.reference_text:
        if not (args.text and args.reference_text):
            raise UsageError("--text and --reference-text go together")
        recognized = Path(args.text).read_text(encoding="utf-8").rstrip("\n")
        expected = Path(args.reference_text).read_text(encoding="utf-8").rstrip("\n")
        result["cer"] = cer(recognized, expected)
    if not result:
        raise UsageError("nothing to evaluate; give an image, mask or text pair")
    _emit(result)
    return EXIT_OK


# =========================================================================
# losses
# =========================================================================

def cmd_losses(args) -> int:
    result: Dict[str, float] = {}
    if args.pred or args.gt:
        if not (args.pred and args.gt):
            raise UsageError("--pred and --gt go together")
        pred, gt = read_flow(args.pred), read_flow(args.gt)
        if args.content:
            content = SoftMask.from_mask(read_mask(args.content))
        else:
            content = SoftMask(np.zeros((gt.height, gt.width)))
        result["l_c"] = content_aware_loss(pred, gt, content, args.beta)
        result["l_s"] = shift_invariant_loss(pred, gt)
        result["total"] = icrm_total(result["l_c"], result["l_s"], args.alpha)

    if args.pred_mask or args.gt_mask:
        if not (args.pred_mask and args.gt_mask):
            raise UsageError("--pred-mask and --gt-mask go together")
        pred_mask = read_soft_mask(args.pred_mask)
        gt_mask = SoftMask.from_mask(read_mask(args.gt_mask))
        result["l_mask"] = bce_loss(pred_mask, gt_mask)
        l_edge = 0.0
        if args.pred_edge and args.gt_edge:
            l_edge = bce_loss(read_soft_mask(args.pred_edge), SoftMask.from_mask(read_mask(args.gt_edge)))
            result["l_edge"] = l_edge
        result["mrm_total"] = mrm_total(args.l_prior, result["l_mask"], l_edge, args.lambda_prior)
        if args.relabel_out:
            write_image(Raster(prior_relabel(gt_mask, pred_mask).values), args.relabel_out)

    if not result:
        raise UsageError("nothing to compute; give --pred/--gt or --pred-mask/--gt-mask")
    _emit(result)
    return EXIT_OK


# =========================================================================
# Parser
# =========================================================================

def _add_mrm_flags(parser):
    parser.add_argument("--iou-threshold", type=float, default=None,
                        help=f"skip threshold (default {MRM_CONFIG['iou_skip_threshold']})")
    parser.add_argument("--points-per-edge", type=int, default=None,
                        help=f"control points per edge (default {MRM_CONFIG['control_points_per_edge']})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dewarp", description="Document image dewarping")
    parser.add_argument("--log-level", default=SYSTEM_CONFIG["log_level"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dewarp", help="full pipeline")
    p.add_argument("input", nargs="?")
    p.add_argument("--input-dir")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--mask")
    p.add_argument("--reference", help="flat reference image; adds ms_ssim to the report")
    p.add_argument("--predictor", default="zero", help="zero | oracle:<gt.flo>[:gain] | external:<cmd>")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--accumulate", choices=("sum", "compose"), default=None)
    p.add_argument("--fixed-iters", action="store_true", help="run exactly --max-iters iterations")
    p.add_argument("--include-rejected", action="store_true")
    p.add_argument("--skip-mrm", action="store_true", help="input is already margin-free; run content rectification only")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    _add_mrm_flags(p)
    p.set_defaults(handler=cmd_dewarp)

    p = sub.add_parser("mrm", help="margin removal only")
    p.add_argument("input")
    p.add_argument("--mask")
    p.add_argument("--out-dir", default=".")
    _add_mrm_flags(p)
    p.set_defaults(handler=cmd_mrm)

    p = sub.add_parser("synth", help="synthetic samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--page-size", type=int, nargs=2, default=list(SYNTH_CONFIG["page_size"]), metavar=("W", "H"))
    p.add_argument("--canvas-size", type=int, nargs=2, default=list(SYNTH_CONFIG["canvas_size"]), metavar=("W", "H"))
    p.add_argument("--max-amplitude", type=float, default=None)
    p.add_argument("--margin-fraction", type=float, default=None)
    p.add_argument("--residual", action="store_true", help="also write the post-margin-removal residual flow")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("eval", help="metrics")
    p.add_argument("--image")
    p.add_argument("--reference")
    p.add_argument("--flow", help="correspondence field; block matching when omitted")
    p.add_argument("--patch", type=int, default=BLOCK_MATCHING_CONFIG["patch"])
    p.add_argument("--search", type=int, default=BLOCK_MATCHING_CONFIG["search"])
    p.add_argument("--with-ssim", action="store_true")
    p.add_argument("--mask")
    p.add_argument("--reference-mask")
    p.add_argument("--text")
    p.add_argument("--reference-text")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("losses", help="training loss values")
    p.add_argument("--pred")
    p.add_argument("--gt")
    p.add_argument("--content")
    p.add_argument("--alpha", type=float, default=LOSS_CONFIG["alpha"])
    p.add_argument("--beta", type=float, default=LOSS_CONFIG["beta"])
    p.add_argument("--pred-mask")
    p.add_argument("--gt-mask")
    p.add_argument("--pred-edge")
    p.add_argument("--gt-edge")
    p.add_argument("--l-prior", type=float, default=0.0)
    p.add_argument("--lambda-prior", type=float, default=LOSS_CONFIG["lambda_prior"])
    p.add_argument("--relabel-out")
    p.set_defaults(handler=cmd_losses)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"dewarp: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        stream=sys.stderr,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    handler: Callable = args.handler
    try:
        return handler(args)
    except Exception as e:
        code = exit_code_for(e)
        logger.error("%s failed: %s", args.command, e)
        return code
