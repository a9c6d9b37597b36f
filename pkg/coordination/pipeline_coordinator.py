"""
Pipeline Coordinator
Runs the full dewarping pipeline for one image or a batch:

1. Read the image (and an external mask, if given)
2. Margin removal -> preliminary image
3. Iterative content rectification with a fresh predictor per image
4. Optionally score the result against a flat reference
5. Write the outputs and a RunReport only once every step has succeeded
"""

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from config.dewarp_config import SYSTEM_CONFIG
from evaluation.metrics import ms_ssim
from imaging.errors import ConfigError, FlowSizeMismatch, PredictorFailed
from imaging.raster import read_image, read_mask, write_image
from imaging.warpfield import write_flow
from stages.content_rectification import ContentRectificationStage, IcrmConfig
from stages.margin_removal import MarginRemovalStage, MrmConfig
from stages.predictors import FlowPredictor

logger = logging.getLogger("dewarp.coordinator")

ERROR_IO = "io"
ERROR_PREDICTOR = "predictor"
ERROR_CONFIG = "config"


@dataclass
class RunReport:
    """Per-image record; to_dict() has a fixed key order."""
    input: str
    success: bool = False
    error: Optional[str] = None
    error_kind: Optional[str] = None
    mrm: Dict[str, Any] = field(default_factory=dict)
    icrm: Dict[str, Any] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    ms_ssim: Optional[float] = None
    seed: Optional[int] = None
    wall_clock_ms: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "input": self.input,
            "success": self.success,
            "error": self.error,
            "error_kind": self.error_kind,
            "mrm": self.mrm,
            "icrm": self.icrm,
            "outputs": self.outputs,
            "ms_ssim": self.ms_ssim,
            "seed": self.seed,
            "wall_clock_ms": self.wall_clock_ms,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _write_outputs(result, outputs: Dict[str, str]):
    """Write image and flow under staging names; both appear under their final names or neither does."""
    staged = {key: Path(outputs[key]).with_name(f".partial_{Path(outputs[key]).name}") for key in ("image", "flow")}
    placed: List[Path] = []
    try:
        write_image(result.final, staged["image"])
        write_flow(result.cumulative, staged["flow"])
        for key, path in staged.items():
            path.replace(outputs[key])
            placed.append(Path(outputs[key]))
    except Exception:
        for path in placed:
            path.unlink(missing_ok=True)
        raise
    finally:
        for path in staged.values():
            path.unlink(missing_ok=True)


def classify_error(error: Exception) -> str:
    if isinstance(error, (PredictorFailed, FlowSizeMismatch)):
        return ERROR_PREDICTOR
    if isinstance(error, (ConfigError, KeyError)):
        return ERROR_CONFIG
    return ERROR_IO


class DewarpCoordinator:
    """
    Owns the two stages and the predictor factory.

    coordinator = DewarpCoordinator(predictor_factory("zero"))
    report = coordinator.process_image("photo.png", "out/")
    """

    def __init__(
        self,
        make_predictor: Callable[[], FlowPredictor],
        mrm_config: Optional[Dict[str, Any]] = None,
        icrm_config: Optional[Dict[str, Any]] = None,
        seed: Optional[int] = None,
        skip_mrm: bool = False,
    ):
        self.make_predictor = make_predictor
        self.skip_mrm = skip_mrm
        self.mrm_config = mrm_config
        self.icrm_config = icrm_config
        self.seed = seed
        # fail fast on bad overrides; stages are rebuilt per image
        MrmConfig.from_dict(mrm_config)
        IcrmConfig.from_dict(icrm_config)

    def process_image(
        self,
        input_path,
        out_dir,
        mask_path=None,
        reference_path=None,
    ) -> RunReport:
        """Run the pipeline on one file. Errors are captured in the report, never raised."""
        started = time.perf_counter()
        input_path = Path(input_path)
        report = RunReport(input=str(input_path), seed=self.seed)
        try:
            img = read_image(input_path)
            mask = read_mask(mask_path) if mask_path is not None else None
            reference = read_image(reference_path) if reference_path is not None else None

            if self.skip_mrm:
                preliminary = img
                report.mrm = {
                    "skipped": True,
                    "iou_score": None,
                    "skip_reason": "margin removal disabled",
                    "output_size": list(img.size),
                }
            else:
                outcome = MarginRemovalStage(self.mrm_config).process(img, mask)
                preliminary = outcome.preliminary
                report.mrm = outcome.summary()

            result = ContentRectificationStage(self.icrm_config).process(preliminary, self.make_predictor())
            report.icrm = result.trace.to_dict()

            if reference is not None:
                report.ms_ssim = ms_ssim(result.final, reference)

            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            stem = input_path.stem
            outputs = {
                "image": str(out_dir / f"{stem}_dewarped.png"),
                "flow": str(out_dir / f"{stem}_flow.flo"),
                "report": str(out_dir / f"{stem}_report.json"),
            }
            _write_outputs(result, outputs)
            report.outputs = outputs
            report.success = True
        except Exception as e:
            report.error = str(e)
            report.error_kind = classify_error(e)
            logger.error("%s failed (%s): %s", input_path, report.error_kind, e)

        report.wall_clock_ms = round((time.perf_counter() - started) * 1000.0, 3)
        if report.success:
            Path(report.outputs["report"]).write_text(report.to_json() + "\n")
        return report

    def process_batch(self, input_paths: List, out_dir, jobs: Optional[int] = None) -> List[RunReport]:
        """
        Process images independently, up to `jobs` at a time.

        Reports come back in sorted path order whatever the job count.
        """
        jobs = jobs or SYSTEM_CONFIG["max_jobs"]
        if jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {jobs}")
        paths = sorted(Path(p) for p in input_paths)
        if jobs == 1:
            return [self.process_image(p, out_dir) for p in paths]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda p: self.process_image(p, out_dir), paths))
