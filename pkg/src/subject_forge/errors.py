"""Exception hierarchy shared across the pipeline."""


class SubjectForgeError(Exception):
    """Base class for every error raised by this package."""


class DegenerateBox(SubjectForgeError, ValueError):
    pass


class DimensionMismatch(SubjectForgeError, ValueError):
    pass


class BackendUnavailable(SubjectForgeError):
    """A backend could not be reached after all retries."""


class MalformedResponse(SubjectForgeError):
    """A backend answered, but the payload does not fit the expected schema."""


class MissingMetadata(SubjectForgeError, KeyError):
    pass


class TooFewFrames(SubjectForgeError, ValueError):
    pass


class NormViolation(SubjectForgeError, ValueError):
    pass


class NotEnoughInstances(SubjectForgeError):
    pass


class OverlapTooHigh(NotEnoughInstances):
    """Instances overlap too much to serve as independent edit targets."""


class ScoreOutOfRange(SubjectForgeError, ValueError):
    pass


class EmptySubTask(SubjectForgeError, ValueError):
    pass


class ConfigError(SubjectForgeError, ValueError):
    pass
