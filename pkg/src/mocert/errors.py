"""Exception hierarchy shared across the package."""


class MocertError(Exception):
    """Base class for all package-specific errors."""


class ModelError(MocertError):
    pass


class ModelParseError(ModelError):
    """Raised on malformed explicit-format input; carries a line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)


class InitialStateDropped(ModelError):
    pass


class QueryError(MocertError):
    pass


class BlowupLimit(MocertError):
    """Product construction exceeded the configured state cap."""


class InconsistentMec(MocertError):
    """A product MEC carries heterogeneous tracking sets (internal bug)."""


class EcFreeRequired(MocertError):
    pass


class SolverUnknown(MocertError):
    """Neither the primal nor the dual search produced a certificate."""


class BackendUnavailable(MocertError):
    pass


class ShapeMismatch(MocertError):
    pass


class StrictUnsupported(MocertError):
    """Strict mean-payoff bounds have no supported certificate encoding."""


class SeparationFailed(MocertError):
    pass


class Divergent(MocertError):
    """Expected frequencies requested for a non-transient part."""


class NotStronglyConnected(MocertError):
    pass


class NotDistribution(MocertError):
    pass


class NoEntryMass(MocertError):
    pass
