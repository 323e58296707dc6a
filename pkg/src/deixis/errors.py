"""Exception types raised across the engine."""


class DeixisError(Exception):
    """Base class for all engine errors."""


class EmptyTrajectory(DeixisError):
    """Fewer than two distinct timestamps; nothing to resample."""


class NotResampled(DeixisError):
    """Operation requires a uniform-rate trajectory."""


class ModelShapeError(DeixisError):
    """Observation dimension does not match the model's emissions."""


class SegmentTooShort(DeixisError):
    """Training segment shorter than the model's state count."""


class StreamTooShort(DeixisError):
    """Feature stream too short for any admissible decoding path."""


class IncompleteTopology(DeixisError):
    """Topology is missing one or more phoneme kinds."""


class WrongKind(DeixisError):
    """Operation applied to a segment of an unsupported phoneme kind."""


class TokenOverlap(DeixisError):
    """Transcript token intervals overlap; speech is sequential."""


class GeneratorNeedsObjects(DeixisError):
    """Synthetic generation requires a map with at least one object."""


class SessionMismatch(DeixisError):
    """Decoded and ground-truth session ids do not line up."""


class ParseError(DeixisError):
    """Malformed session file line."""

    def __init__(self, msg, line_no=None):
        super().__init__(msg if line_no is None else f"line {line_no}: {msg}")
        self.line_no = line_no


class TimeOrderError(DeixisError):
    """Timestamps out of order or truth segments overlapping."""
