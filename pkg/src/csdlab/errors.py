"""Exception types shared across the package."""


class CsdlabError(Exception):
    """Base class for csdlab-specific failures."""


class DegenerateDecompositionError(CsdlabError):
    """The pseudoinverse re-orthogonalization step has no valid solution.

    Raised when the all-ones vector is (numerically) outside the row space of
    the reconstructed classifier matrix, so no common component exists.
    """


class RankDeficientInstanceError(CsdlabError):
    """A ground-truth instance violates the rank preconditions of the
    identifiability check."""


class NumericOverflowError(CsdlabError):
    """Non-finite values appeared during training or loss evaluation."""

    def __init__(self, message, epoch=None, step=None):
        if epoch is not None:
            message = f"epoch {epoch}, step {step}: {message}"
        super().__init__(message)
        self.epoch = epoch
        self.step = step


class DegenerateFitError(CsdlabError):
    """Beta moment fitting is impossible (zero variance or out-of-family
    moments)."""


class DatasetFormatError(CsdlabError):
    """A dataset or matrix file is malformed.

    Carries the offending location so CLI users can find the bad byte.
    """

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}: "
            if line is not None:
                loc = f"{path}:{line}: "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class FormatVersionError(CsdlabError):
    """A file declares a format version this build does not understand."""

    def __init__(self, expected, actual, path=None):
        where = f" in {path}" if path else ""
        super().__init__(
            f"unsupported format version{where}: expected {expected!r}, got {actual!r}"
        )
        self.expected = expected
        self.actual = actual


class ConfigError(CsdlabError):
    """An experiment config file failed validation. ``field`` names the
    offending entry."""

    def __init__(self, message, field=None):
        if field is not None:
            message = f"config field {field!r}: {message}"
        super().__init__(message)
        self.field = field


class AllRunsFailedError(CsdlabError):
    """Every training run of at least one experiment arm failed."""
