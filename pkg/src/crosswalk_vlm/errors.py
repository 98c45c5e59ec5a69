"""Exception hierarchy shared by every pipeline stage.

Each stage raises a subclass of :class:`PipelineError` tagged with the stage
name, so the CLI can map failures to exit codes and prefix diagnostics.
"""

from __future__ import annotations


class PipelineError(Exception):
    stage = "pipeline"
    exit_code = 2

    def __str__(self) -> str:
        return f"[{self.stage}] {super().__str__()}"


# geo-raster ---------------------------------------------------------------


class RasterError(PipelineError):
    stage = "geo-raster"


class MissingGeoreference(RasterError):
    pass


class UnsupportedEncoding(RasterError):
    pass


class ProjectionNotProjected(RasterError):
    pass


class ProjectionMismatch(RasterError):
    pass


class OutOfZone(RasterError):
    pass


# road-graph ---------------------------------------------------------------


class RoadGraphError(PipelineError):
    stage = "road-graph"


class MalformedXml(RoadGraphError):
    pass


class DanglingReference(RoadGraphError):
    pass


class OutsideWindow(RoadGraphError):
    pass


# patch-studio / prompt-kit ------------------------------------------------


class InsufficientSamples(PipelineError):
    stage = "patch-studio"

    def __init__(self, available: dict[str, int], target: int) -> None:
        self.available = dict(available)
        self.target = target
        short = {k: v for k, v in self.available.items() if v < target}
        super().__init__(f"need {target} per class, short: {short}")


class MissingImage(PipelineError):
    stage = "prompt-kit"


# model-gateway ------------------------------------------------------------


class GatewayError(PipelineError):
    stage = "model-gateway"
    exit_code = 3


class MissingCredential(GatewayError):
    pass


class TransientExhausted(GatewayError):
    def __init__(self, message: str, attempts: int) -> None:
        super().__init__(message)
        self.attempts = attempts


class ReplayMiss(GatewayError):
    def __init__(self, digest: str) -> None:
        super().__init__(f"no transcript for digest {digest}")
        self.digest = digest


class MalformedResponse(GatewayError):
    pass


class RequestRejected(GatewayError):
    """Non-retryable HTTP failure (4xx other than 429)."""


# eval-lab -----------------------------------------------------------------


class EvalError(PipelineError):
    stage = "eval-lab"


class IdMismatch(EvalError):
    def __init__(self, only_predicted: set[str], only_truth: set[str]) -> None:
        self.only_predicted = sorted(only_predicted)
        self.only_truth = sorted(only_truth)
        super().__init__(
            f"sample ids differ: {len(self.only_predicted)} predicted without truth, "
            f"{len(self.only_truth)} truths without prediction"
        )


class EmptyInput(EvalError):
    pass


# cli ----------------------------------------------------------------------


class InputPathError(PipelineError):
    stage = "cli"
    exit_code = 1
