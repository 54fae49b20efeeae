EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_OPTIMIZATION = 3


class PivotFitError(Exception):
    """Base class for every failure the pipeline reports to its caller."""

    exit_code = EXIT_VALIDATION


class RecordFormatError(PivotFitError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class PipelineIOError(PivotFitError):
    """Missing input file or unusable output location."""

    exit_code = EXIT_IO


class ConfigError(PivotFitError):
    pass


class RecordValidationError(PivotFitError):
    """One entry in `errors` per violated invariant."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


class ResampleError(PivotFitError):
    def __init__(self, message: str, segment: int | None = None):
        self.segment = segment
        if segment is not None:
            message = f"segment {segment}: {message}"
        super().__init__(message)


class BackboneError(PivotFitError):
    pass


class PivotError(PivotFitError):
    pass


class OptimizationError(PivotFitError):
    exit_code = EXIT_OPTIMIZATION


class FitInterrupted(OptimizationError):
    pass


class StageError(PivotFitError):
    """Wraps a failure with the name of the pipeline stage it happened in."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        if isinstance(cause, PivotFitError):
            self.exit_code = cause.exit_code
        elif isinstance(cause, OSError):
            self.exit_code = EXIT_IO
        super().__init__(f"[{stage}] {cause}")
