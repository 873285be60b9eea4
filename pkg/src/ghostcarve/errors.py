"""Exception types shared across the engine."""


class GhostcarveError(Exception):
    """Base class for all engine errors."""


class SizeLimitError(GhostcarveError):
    """Requested matrix or pattern set would exceed the allocation guard."""


class StimulusSpecError(GhostcarveError):
    """Flicker parameters violate the operating band or duty constraints."""


class PlanError(GhostcarveError):
    """Scan plan cannot be built for the requested geometry."""


class StateError(GhostcarveError):
    """Carve state was driven with an inconsistent trigger or column id."""


class CalibrationError(GhostcarveError):
    """Calibration failed or produced a degenerate linear range."""


class SamplingError(GhostcarveError):
    """Sample rate too low to resolve the requested harmonics."""


class SceneFormatError(GhostcarveError):
    """Scene file malformed or has unsupported dimensions."""

    def __init__(self, message, path=None, line=None, byte=None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}")
        if byte is not None:
            loc.append(f"byte {byte}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.path = path
        self.line = line
        self.byte = byte


class SolveError(GhostcarveError):
    """Reconstruction linear system is singular or ill-conditioned."""


class AssemblyError(GhostcarveError):
    """Stripe estimates are missing or inconsistent with the scan plan."""


class ReplayError(GhostcarveError):
    """A session log cannot be replayed against the current configuration."""


class SessionProtocolError(GhostcarveError):
    """Wire-protocol violation in a human-loop session."""


class ResponseTimeout(GhostcarveError):
    """No typed response arrived within the configured window."""


class SessionPaused(GhostcarveError):
    """A human-loop run was checkpointed mid-stripe and can be resumed."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class AcquisitionAborted(GhostcarveError):
    """Detector failed mid-acquisition; partial results are preserved.

    Attributes
    ----------
    state : CarveState
        State at the moment of the failure.
    record : BucketRecord
        Measurements collected before the failure.
    """

    def __init__(self, message, state=None, record=None):
        super().__init__(message)
        self.state = state
        self.record = record
