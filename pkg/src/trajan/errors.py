"""Exception hierarchy shared by all trajan modules.

The CLI maps these onto stable exit codes: usage errors exit 2,
resource errors exit 3, everything else (I/O, task failures) exits 1.
"""


class TrajanError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(TrajanError):
    """Caller violated a documented precondition (bad argument, bad shape)."""


class FormatError(TrajanError):
    """A byte stream does not conform to the TRJB file format."""


class DataError(TrajanError):
    """Well-formed input carrying invalid values (NaN/Inf coordinates)."""


class ResourceError(TrajanError):
    """A payload or broadcast exceeds the configured worker memory budget."""


class ProtocolError(TrajanError):
    """A wire-protocol frame was malformed or arrived out of sequence."""


class TaskFailure(TrajanError):
    """A map task reported an error status.

    Carries enough context to identify the failing task.
    """

    def __init__(self, message, task_id=None, coords=None):
        super().__init__(message)
        self.task_id = task_id
        self.coords = coords
