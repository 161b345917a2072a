"""Exception hierarchy shared by every stage."""


class PCGEvalError(Exception):
    """Base class for all pipeline errors."""


class DropError(PCGEvalError):
    kind = "DropError"


class OutOfBounds(DropError):
    kind = "OutOfBounds"


class GridOverflow(DropError):
    kind = "GridOverflow"


class MissingObjectMarker(PCGEvalError):
    pass


class ExtractionError(PCGEvalError):
    kind = "ExtractionError"


class NoCodeFence(ExtractionError):
    kind = "NoCodeFence"


class EmptyScript(ExtractionError):
    kind = "EmptyScript"


class BackendUnavailable(PCGEvalError):
    pass


class IncompleteRecords(PCGEvalError):
    pass


class TransportError(PCGEvalError):
    pass


class TrialExhausted(PCGEvalError):
    pass


class MissingArtifact(PCGEvalError):
    def __init__(self, path):
        super().__init__(f"missing artifact: {path}")
        self.path = path
