"""Exception hierarchy shared by every gpia module."""


class GpiaError(Exception):
    """Base class for all errors raised by gpia."""


class ParseError(GpiaError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class GraphRangeError(GpiaError):
    pass


class SelfLoopError(GpiaError):
    pass


class DuplicateEdgeError(GpiaError):
    pass


class ConsistencyError(GpiaError):
    pass


class PropertySpecError(GpiaError):
    pass


class SamplingExhaustedError(GpiaError):
    pass


class SplitInfeasibleError(GpiaError):
    pass


class DensifyFailedError(GpiaError):
    pass


class ConfigurationError(GpiaError):
    """Shape or parameter mismatch between a model and its inputs."""


class DivergenceError(GpiaError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


class UsageError(GpiaError):
    pass


class ShapeError(GpiaError):
    pass


class AlignmentInfeasibleError(GpiaError):
    pass


class AffinityDegenerateError(GpiaError):
    pass


class DegenerateLabelError(GpiaError):
    pass


class DegenerateClusterError(GpiaError):
    pass


class KnowledgeError(GpiaError):
    """Adversary knowledge does not match the attack's taxonomy row."""


class GroupEmptyError(GpiaError):
    pass


class UndefinedCorrelationError(GpiaError):
    pass


class StageError(GpiaError):
    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
