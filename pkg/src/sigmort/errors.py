"""Exception hierarchy. ``category`` is the machine-readable tag the CLI prints."""


class SigmortError(Exception):
    category = "error"


class ParseError(SigmortError):
    category = "parse"

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateCellError(ParseError):
    category = "duplicate-cell"


class ConfigError(SigmortError):
    category = "config"


class CoverageError(SigmortError):
    category = "coverage"


class DataError(SigmortError):
    category = "data"


class DegenerateDataError(DataError):
    category = "degenerate-data"


class InsufficientDataError(DataError):
    category = "insufficient-data"


class DomainError(SigmortError, ValueError):
    category = "domain"


class ShapeError(SigmortError, ValueError):
    category = "shape"


class SizeError(SigmortError, OverflowError):
    category = "size"


class RankError(SigmortError):
    category = "rank"

    def __init__(self, message, effective_rank=None):
        self.effective_rank = effective_rank
        super().__init__(message)


class FitError(SigmortError):
    category = "fit"


class AlignmentError(SigmortError):
    category = "alignment"
