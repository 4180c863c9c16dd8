"""Exception types shared across the package.

The CLI maps these onto stable exit codes (config 2, data 3, numeric 4),
so library code should raise the most specific one that applies.
"""


class EvidkitError(Exception):
    """Base class for all evidkit-specific errors."""


class ConfigError(EvidkitError):
    """A configuration value or combination of values is invalid."""


class DataFormatError(EvidkitError):
    """A dataset, CIW, or checkpoint file does not parse or fails validation."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}: "
        if line is not None:
            loc = f"{loc}line {line}: "
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line = line


class TrainingDiverged(EvidkitError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, batch, loss):
        super().__init__(
            f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}; "
            "lower the learning rate or check the input data"
        )
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
