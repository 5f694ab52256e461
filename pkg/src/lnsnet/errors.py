"""Exception hierarchy shared by all modules."""


class LNSError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(LNSError, ValueError):
    """An array argument has the wrong rank or extent."""


class InvalidArgument(LNSError, ValueError):
    """A scalar argument is outside its valid range."""


class ImageError(LNSError):
    pass


class ImageNotFound(ImageError, FileNotFoundError):
    pass


class UnsupportedFormat(ImageError):
    pass


class CorruptImage(ImageError):
    pass


class ModelFormatError(LNSError):
    """Bad magic or malformed record in a model file."""


class ModelVersionError(ModelFormatError):
    pass


class ModelTruncatedError(ModelFormatError):
    pass


class ConfigError(LNSError, ValueError):
    pass


class TrainingDiverged(LNSError, ArithmeticError):
    """Non-finite loss during training."""

    def __init__(self, message, task_id=None, epoch=None):
        super().__init__(f"{message} (task={task_id}, epoch={epoch})")
        self.task_id = task_id
        self.epoch = epoch
