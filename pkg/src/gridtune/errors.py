"""Exception hierarchy shared by every gridtune module."""


class GridTuneError(Exception):
    """Base class for all errors raised by gridtune."""


# topology / model
class DuplicateIdError(GridTuneError):
    pass


class EmptyTopologyError(GridTuneError):
    pass


class SaturatedNodeError(GridTuneError):
    """Background load leaves no capacity for the job (background >= 1)."""


# kernel
class PastEventError(GridTuneError):
    pass


class UnknownAgentError(GridTuneError):
    pass


# monitoring
class TimeRegressionError(GridTuneError):
    pass


class UnknownConsumerError(GridTuneError):
    pass


class EmptyInputError(GridTuneError, ValueError):
    pass


# analysis agents
class ForeignNodeError(GridTuneError):
    pass


class ForeignResourceError(GridTuneError):
    pass


# control
class JobNotRunningError(GridTuneError):
    pass


class NodeCapacityExceededError(GridTuneError):
    pass


class NotTunableError(GridTuneError):
    pass


class UnmanagedJobError(GridTuneError):
    pass


class TargetUnavailableError(GridTuneError):
    pass


# config / cli / reporting
class ParseError(GridTuneError):
    def __init__(self, line, message):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


class ValidationError(GridTuneError):
    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class UnknownScenarioError(GridTuneError):
    pass


class MissingJobError(GridTuneError):
    pass


class ExportError(GridTuneError, OSError):
    """Trace export could not write its output files."""
