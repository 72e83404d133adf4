"""Exception types shared across the package.

The CLI maps ConfigError to exit code 1 and every other PeaError (or
unexpected exception) to exit code 2.
"""


class PeaError(Exception):
    """Base class for all package errors."""


class ShapeError(PeaError):
    """Tensor shapes incompatible with the requested operation."""


class ConfigError(PeaError):
    """Invalid configuration value or malformed config document."""


class StateError(PeaError):
    """Operation requested in the wrong state (e.g. gradients before backward)."""


class ContractError(PeaError):
    """A documented precondition was violated by the caller."""


class NumericError(PeaError):
    """Non-finite value encountered during training."""


class IdxParseError(PeaError):
    """Malformed IDX file. Carries the byte offset of the failure."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class CheckpointError(PeaError):
    """Base class for checkpoint/exported-model load failures."""


class CheckpointFormatError(CheckpointError):
    """Bad magic, truncated file, or undecodable header."""


class CheckpointVersionError(CheckpointError):
    """File was written by a newer format version than this reader."""


class CheckpointChecksumError(CheckpointError):
    """A payload blob failed its CRC32 check."""


class CheckpointShapeError(CheckpointError):
    """A stored blob's shape does not match the model descriptor."""
