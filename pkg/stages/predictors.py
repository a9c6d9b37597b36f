"""
Flow predictors for the content rectification loop.

A predictor maps the current rectified image to a residual displacement
flow of the same size. The trained network is not part of this repo; these
implementations are the plug-in points around it.
"""

import logging
import shlex
import subprocess
import tempfile
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from config.dewarp_config import SYSTEM_CONFIG
from imaging.errors import ConfigError, FlowSizeMismatch, PredictorFailed
from imaging.raster import Raster, write_image
from imaging.warpfield import DisplacementFlow, check_flow_matches, read_flow, zero_flow

logger = logging.getLogger("dewarp.predictors")


class FlowPredictor:
    """Interface: predict(img) -> DisplacementFlow with img's dimensions."""

    name = "predictor"

    def predict(self, img: Raster) -> DisplacementFlow:
        raise NotImplementedError("Subclasses must implement predict()")

    def describe(self) -> str:
        return self.name


class ZeroPredictor(FlowPredictor):
    """Always predicts no displacement."""

    name = "zero"

    def predict(self, img: Raster) -> DisplacementFlow:
        return zero_flow(img.width, img.height)


class OraclePredictor(FlowPredictor):
    """
    Returns gain * (gt - C), where C is the sum of everything it has
    predicted so far. Under sum accumulation the residual after n calls is
    (1 - gain)^n times the initial residual.
    """

    name = "oracle"

    def __init__(self, gt_flow: DisplacementFlow, gain: float = 1.0):
        if not 0.0 < gain <= 1.0:
            raise ValueError(f"oracle gain must be in (0, 1], got {gain}")
        self.gt_flow = gt_flow
        self.gain = float(gain)
        self.applied = np.zeros_like(gt_flow.vectors)

    def predict(self, img: Raster) -> DisplacementFlow:
        check_flow_matches(self.gt_flow, img, "oracle ground truth")
        step = self.gain * (self.gt_flow.vectors - self.applied)
        self.applied = self.applied + step
        return DisplacementFlow(step)

    def describe(self) -> str:
        return f"oracle(gain={self.gain})"


class ScriptedPredictor(FlowPredictor):
    """Replays a fixed list of flows, repeating the last one when exhausted."""

    name = "scripted"

    def __init__(self, flows: Sequence[DisplacementFlow]):
        if not flows:
            raise ValueError("ScriptedPredictor needs at least one flow")
        self.flows: List[DisplacementFlow] = list(flows)
        self.calls = 0

    def predict(self, img: Raster) -> DisplacementFlow:
        flow = self.flows[min(self.calls, len(self.flows) - 1)]
        self.calls += 1
        check_flow_matches(flow, img, "scripted flow")
        return flow


class ExternalPredictor(FlowPredictor):
    """
    Runs `<cmd> <input.png> <output.flo>` per call.

    The template may place the paths explicitly with {input} and {output};
    otherwise both are appended. Calls are serialized per instance.
    """

    name = "external"

    def __init__(self, command_template: str, timeout: Optional[float] = None):
        if not command_template.strip():
            raise ValueError("external predictor command is empty")
        self.command_template = command_template
        self.timeout = timeout if timeout is not None else SYSTEM_CONFIG["external_predictor_timeout_seconds"]

    def _command(self, input_path: Path, output_path: Path) -> List[str]:
        if "{input}" in self.command_template or "{output}" in self.command_template:
            return shlex.split(self.command_template.format(
                input=shlex.quote(str(input_path)), output=shlex.quote(str(output_path))))
        return shlex.split(self.command_template) + [str(input_path), str(output_path)]

    def predict(self, img: Raster) -> DisplacementFlow:
        with tempfile.TemporaryDirectory(prefix="dewarp_predict_") as workdir:
            input_path = Path(workdir) / "input.png"
            output_path = Path(workdir) / "output.flo"
            write_image(img, input_path)
            command = self._command(input_path, output_path)
            logger.info("running external predictor: %s", command)
            try:
                completed = subprocess.run(command, capture_output=True, text=True, timeout=self.timeout)
            except (OSError, subprocess.TimeoutExpired) as e:
                raise PredictorFailed(f"cannot run {command[0]}: {e}") from e
            if completed.returncode != 0:
                raise PredictorFailed(
                    f"{command[0]} failed: {completed.stderr.strip()[:500]}", status=completed.returncode)
            if not output_path.exists():
                raise PredictorFailed(f"{command[0]} wrote no flow file")
            try:
                flow = read_flow(output_path)
            except ValueError as e:
                raise PredictorFailed(f"invalid flow from {command[0]}: {e}") from e
        if flow.size != img.size:
            raise FlowSizeMismatch(f"external flow is {flow.size}, image is {img.size}")
        return flow

    def describe(self) -> str:
        return f"external({self.command_template})"


def predictor_factory(spec: str) -> Callable[[], FlowPredictor]:
    """
    Parse a predictor spec into a factory producing a fresh predictor:
        zero | oracle:<gt.flo>[:gain] | external:<command>
    The oracle's ground truth is read once; each predictor gets its own
    accumulator so images never share state.
    """
    kind, _, rest = spec.partition(":")
    if kind == "zero" and not rest:
        return ZeroPredictor
    if kind == "oracle" and rest:
        path, gain = rest, 1.0
        head, _, tail = rest.rpartition(":")
        if head:
            try:
                path, gain = head, float(tail)
            except ValueError:
                pass
        if not 0.0 < gain <= 1.0:
            raise ConfigError(f"oracle gain must be in (0, 1], got {gain}")
        gt_flow = read_flow(path)
        return lambda: OraclePredictor(gt_flow, gain)
    if kind == "external" and rest.strip():
        return lambda: ExternalPredictor(rest)
    raise ConfigError(f"bad predictor spec {spec!r}; expected zero | oracle:<gt.flo>[:gain] | external:<cmd>")
