"""Exception types shared across the engine."""
from __future__ import annotations


class IapfError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(IapfError):
    """Two grids that must share dimensions do not."""


class CountsMismatch(IapfError):
    """RLE counts do not sum to height*width."""


class DegenerateBox(IapfError):
    """A box is thinner than one pixel after clamping."""


class ConstantRegion(IapfError):
    """All heatmap values inside a box are equal; min-max normalization is undefined."""


class NoBoxes(IapfError):
    """Box preparation produced nothing and the whole-image fallback is disabled."""


class EmptyStack(IapfError):
    """An instance mask stack with no masks cannot be collapsed."""


class EmptyCandidates(IapfError):
    """Voting needs at least one candidate mask."""


class UnknownTag(IapfError):
    """The synthetic scene has no instance or background under this tag."""


class BackendError(IapfError):
    """A model-backend call failed; the message identifies the call."""


class FixtureMissing(BackendError):
    """A fixture file the backend needs does not exist."""

    def __init__(self, path, detail: str = ""):
        self.path = str(path)
        super().__init__(f"missing fixture {self.path}" + (f": {detail}" if detail else ""))


class FixtureCorrupt(BackendError):
    """A fixture file exists but violates its schema or invariants."""

    def __init__(self, path, reason: str):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"corrupt fixture {self.path}: {reason}")


class TransportError(BackendError):
    """The wire-protocol process is gone or the pipe broke."""


class WireTimeout(TransportError):
    """No response arrived within the per-call timeout."""


class ProtocolError(BackendError):
    """The wire peer sent a malformed or out-of-contract message."""


class RemoteError(BackendError):
    """The wire peer answered with a typed error payload."""

    def __init__(self, code: int, message: str):
        self.code = code
        self.message = message
        super().__init__(f"remote error {code}: {message}")


class MissingPrediction(IapfError):
    """A ground-truth id has no prediction file."""

    def __init__(self, image_id: str):
        self.image_id = image_id
        super().__init__(f"no prediction for image {image_id!r}")


class MissingGroundTruth(IapfError):
    """A prediction id has no ground-truth file."""

    def __init__(self, image_id: str):
        self.image_id = image_id
        super().__init__(f"no ground truth for image {image_id!r}")
