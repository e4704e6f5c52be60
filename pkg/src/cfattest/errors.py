"""Exception hierarchy shared by every module."""


class CfaError(Exception):
    """Base class for all toolkit errors."""


class ParseError(CfaError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class EmptyTraceError(CfaError):
    pass


class WriteError(CfaError):
    pass


class SpecError(CfaError):
    pass


class NoDopSpliceError(CfaError):
    pass


class ModelError(CfaError):
    pass


class TrainingDivergedError(CfaError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")


class MetricUndefinedError(CfaError):
    pass


class EmptySetError(CfaError):
    pass


class CalibrationError(CfaError):
    pass


class ProfileError(CfaError):
    pass


class ConfigError(CfaError):
    pass
