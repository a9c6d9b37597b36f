"""
Iterative Content Rectification Module.

Each iteration asks the predictor for a residual flow on the current
rectified image, folds it into the cumulative flow, and decides whether to
stop from the flow variance:
    var(D^n) > var(D^(n-1))  -> stop, D^n discarded   (n >= 2)
    var(D^n) <= tau          -> stop, D^n kept
    otherwise                -> continue (at most max_iters)
Every intermediate and the final image are resampled once from the input,
never chained through earlier outputs.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

from config.dewarp_config import ICRM_CONFIG, merged
from evaluation.metrics import estimate_dense_flow, local_distortion, ms_ssim
from imaging.errors import ConfigError, FlowSizeMismatch, PredictorFailed
from imaging.raster import Raster
from imaging.warpfield import (
    DisplacementFlow,
    accumulate_compose,
    accumulate_sum,
    check_flow_matches,
    flow_stats,
    rescale_vectors,
    sample,
    zero_flow,
)
from stages import BaseStage
from stages.predictors import FlowPredictor

IterationObserver = Callable[[int, Raster, DisplacementFlow], None]


class TerminationReason(str, Enum):
    VARIANCE_INCREASED = "VarianceIncreased"
    BELOW_TAU = "BelowTau"
    MAX_ITERS = "MaxIters"


@dataclass(frozen=True)
class IcrmConfig:
    tau: float = ICRM_CONFIG["tau"]
    max_iters: int = ICRM_CONFIG["max_iters"]
    accumulation: str = ICRM_CONFIG["accumulation"]
    working_resolution: Tuple[int, int] = ICRM_CONFIG["working_resolution"]
    adaptive: bool = ICRM_CONFIG["adaptive"]
    include_rejected: bool = ICRM_CONFIG["include_rejected"]

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.accumulation not in ("sum", "compose"):
            raise ConfigError(f"accumulation must be sum|compose, got {self.accumulation}")
        if len(self.working_resolution) != 2 or min(self.working_resolution) < 1:
            raise ConfigError(f"bad working_resolution {self.working_resolution}")

    @classmethod
    def from_dict(cls, overrides: Optional[Dict[str, Any]] = None) -> "IcrmConfig":
        values = merged(ICRM_CONFIG, overrides)
        values["working_resolution"] = tuple(values["working_resolution"])
        return cls(**values)


@dataclass(frozen=True)
class IterationRecord:
    index: int
    variance: float
    mean_magnitude: float
    incorporated: bool = True

    def to_dict(self):
        return {
            "index": self.index,
            "variance": self.variance,
            "mean_magnitude": self.mean_magnitude,
            "incorporated": self.incorporated,
        }


@dataclass
class IterationTrace:
    records: List[IterationRecord] = field(default_factory=list)
    termination_reason: Optional[TerminationReason] = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    def variances(self) -> List[float]:
        return [r.variance for r in self.records]

    def to_dict(self):
        return {
            "records": [r.to_dict() for r in self.records],
            "termination_reason": self.termination_reason.value if self.termination_reason else None,
        }


@dataclass(frozen=True, eq=False)
class IcrmResult:
    final: Raster
    cumulative: DisplacementFlow
    trace: IterationTrace


def working_variance_stats(flow: DisplacementFlow, working_resolution: Tuple[int, int]):
    """flow_stats after expressing the vectors in working-resolution pixels."""
    work_w, work_h = working_resolution
    return flow_stats(rescale_vectors(flow, work_w / flow.width, work_h / flow.height))


def run_icrm(
    img: Raster,
    predictor: FlowPredictor,
    cfg: Optional[IcrmConfig] = None,
    on_iteration: Optional[IterationObserver] = None,
) -> IcrmResult:
    """
    Iteratively rectify img (the preliminary dewarped image).

    With cfg.adaptive False exactly max_iters flows are incorporated.
    on_iteration(n, image_n, flow_n) is called after every incorporated flow.
    """
    cfg = cfg or IcrmConfig()
    accumulate = accumulate_sum if cfg.accumulation == "sum" else accumulate_compose

    cumulative = zero_flow(img.width, img.height)
    current = img
    trace = IterationTrace()
    previous_variance = None

    for n in range(1, cfg.max_iters + 1):
        try:
            d_n = predictor.predict(current)
        except (PredictorFailed, FlowSizeMismatch) as e:
            if isinstance(e, PredictorFailed) and e.iteration is None:
                e.iteration = n
            raise
        except Exception as e:
            raise PredictorFailed(f"{predictor.describe()} raised {e!r}", iteration=n) from e
        check_flow_matches(d_n, img, f"predicted flow at iteration {n}")

        stats = working_variance_stats(d_n, cfg.working_resolution)
        if cfg.adaptive and previous_variance is not None and stats.variance > previous_variance:
            if cfg.include_rejected:
                cumulative = accumulate(cumulative, d_n)
            trace.records.append(IterationRecord(n, stats.variance, stats.mean_magnitude, cfg.include_rejected))
            trace.termination_reason = TerminationReason.VARIANCE_INCREASED
            break

        cumulative = accumulate(cumulative, d_n)
        trace.records.append(IterationRecord(n, stats.variance, stats.mean_magnitude))
        current = sample(img, cumulative)
        if on_iteration is not None:
            on_iteration(n, current, d_n)

        if cfg.adaptive and stats.variance <= cfg.tau:
            trace.termination_reason = TerminationReason.BELOW_TAU
            break
        previous_variance = stats.variance
    else:
        trace.termination_reason = TerminationReason.MAX_ITERS

    return IcrmResult(sample(img, cumulative), cumulative, trace)


def iteration_sweep(
    img: Raster,
    predictor: FlowPredictor,
    reference: Raster,
    iterations: int,
    cfg: Optional[IcrmConfig] = None,
) -> List[Dict[str, float]]:
    """
    Fixed-iteration run scoring every intermediate image against a flat
    reference: [{iteration, variance, ms_ssim, ld}, ...].
    """
    base = cfg or IcrmConfig()
    fixed = IcrmConfig(base.tau, iterations, base.accumulation, base.working_resolution, False, base.include_rejected)
    rows: List[Dict[str, float]] = []

    def score(n: int, image: Raster, flow: DisplacementFlow):
        rows.append({
            "iteration": n,
            "variance": working_variance_stats(flow, fixed.working_resolution).variance,
            "ms_ssim": ms_ssim(image, reference),
            "ld": local_distortion(estimate_dense_flow(image, reference)),
        })

    run_icrm(img, predictor, fixed, on_iteration=score)
    return rows


class ContentRectificationStage(BaseStage):
    """Stage wrapper around run_icrm that logs every iteration."""

    name = "Content Rectification"

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        super().__init__(merged(ICRM_CONFIG, config))
        self.icrm_config = IcrmConfig.from_dict(self.config)

    def process(self, img: Raster, predictor: FlowPredictor) -> IcrmResult:
        self.log_interaction("start", {"predictor": predictor.describe(), "size": list(img.size)})
        result = run_icrm(img, predictor, self.icrm_config)
        for record in result.trace.records:
            self.log_interaction("iteration", record.to_dict())
        self.log_interaction("terminated", {
            "reason": result.trace.termination_reason.value,
            "iterations": result.trace.iterations,
        })
        return result
