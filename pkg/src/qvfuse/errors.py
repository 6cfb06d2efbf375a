"""Exception and warning classes.

Every exception carries a ``category`` used by the CLI to pick an exit code.
"""


class QVFuseError(Exception):
    category = "error"
    exit_code = 1


class ConfigError(QVFuseError):
    """Invalid configuration. ``violations`` lists every problem found."""

    category = "config"
    exit_code = 2

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class InputError(QVFuseError, OSError):
    category = "io"
    exit_code = 3


class IndexFormatError(InputError):
    """Wrong magic bytes or unsupported on-disk format version."""


class IndexIntegrityError(InputError):
    """Truncated or corrupted index file."""


class TransportError(QVFuseError):
    category = "transport"
    exit_code = 4


class ParseError(QVFuseError, ValueError):
    category = "parse"
    exit_code = 5

    def __init__(self, message, *, line=None, raw=None):
        self.line = line
        self.raw = raw
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ParseError):
    """A file parsed but violates a structural invariant (rank gaps, inversions...)."""


class MissingStageError(QVFuseError):
    category = "io"
    exit_code = 3

    def __init__(self, stage, path):
        self.stage = stage
        self.path = path
        super().__init__(f"missing output of stage '{stage}': {path} (run `{stage}` first)")


class QVFuseWarning(UserWarning):
    pass


class EmptyQueryWarning(QVFuseWarning):
    """Query analyzed to zero terms; distinct from a query that matched nothing."""


class NoFeedbackWarning(QVFuseWarning):
    pass


class ShortfallWarning(QVFuseWarning):
    """Fewer query variants parsed than requested."""


class SkippedTopicWarning(QVFuseWarning):
    pass


class FormatWarning(QVFuseWarning):
    """Lenient-mode parse problem, or a duplicate judgment."""
