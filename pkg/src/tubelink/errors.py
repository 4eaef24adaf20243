"""Exception types raised by tubelink."""


class TubelinkError(Exception):
    """Base class for all library errors."""


class InvalidBoxError(TubelinkError, ValueError):
    pass


class ProposalFormatError(TubelinkError, ValueError):
    """A proposals / ground-truth / tube file failed validation.

    ``frame`` and ``proposal_id`` locate the offending record when known.
    """

    def __init__(self, message, frame=None, proposal_id=None):
        super().__init__(message)
        self.frame = frame
        self.proposal_id = proposal_id


class ScenarioError(TubelinkError, ValueError):
    pass


class NoTubeError(TubelinkError):
    """Linking is impossible because a frame has no proposals."""

    def __init__(self, message, frame=None):
        super().__init__(message)
        self.frame = frame


class InstanceTooLargeError(TubelinkError):
    pass


class DegenerateAnchorError(TubelinkError, ValueError):
    pass


class DecodeOverflowError(TubelinkError, OverflowError):
    pass
