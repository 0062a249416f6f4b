"""Exception hierarchy.

Every error raised deliberately by the library derives from
:class:`EncqrError`, and additionally from the builtin exception that best
describes it, so callers can catch either.
"""


class EncqrError(Exception):
    """Base class for all library errors."""


class ConfigError(EncqrError, ValueError):
    """Invalid experiment configuration."""


class SeriesTooShort(EncqrError, ValueError):
    pass


class InvalidWindow(EncqrError, ValueError):
    pass


class EmptyResidualSet(EncqrError, ValueError):
    pass


class ShapeError(EncqrError, ValueError):
    pass


class NoTrainingData(EncqrError, ValueError):
    pass


class NotFitted(EncqrError, RuntimeError):
    pass


class SubsetsTooSmall(EncqrError, ValueError):
    pass


class EmptyAggregate(EncqrError, ValueError):
    pass


class NoOutOfSampleLearner(EncqrError, ValueError):
    pass


class BatchSizeMismatch(EncqrError, ValueError):
    pass


class DegenerateRange(EncqrError, ValueError):
    pass


class MissingColumn(EncqrError, KeyError):
    def __str__(self):
        # KeyError quotes its argument; keep the message readable
        return str(self.args[0]) if self.args else ""


class NonUniformResolution(EncqrError, ValueError):
    def __init__(self, message, gaps=()):
        super().__init__(message)
        self.gaps = list(gaps)


class ParseError(EncqrError, ValueError):
    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = list(rows)


class PartitionTooSmall(EncqrError, ValueError):
    pass


class LookaheadError(EncqrError, RuntimeError):
    """A test target was read before the batch containing it was predicted."""
