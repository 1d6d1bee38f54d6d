"""Exception hierarchy shared by every stage of the pipeline."""


class HandPDError(Exception):
    """Base class for all errors raised by handpd."""


class ShapeError(HandPDError, ValueError):
    pass


class ParameterError(HandPDError, ValueError):
    pass


class DataError(HandPDError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.path = path


class FormatError(HandPDError, ValueError):
    """Checkpoint file failed validation."""


class ProtocolError(HandPDError, RuntimeError):
    pass


class UsageError(HandPDError, RuntimeError):
    pass


class StageError(HandPDError, RuntimeError):
    """Wraps a failure inside one stage of ``diagnose_sequence``."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
