"""Exception hierarchy shared by all phsic modules."""


class PhsicError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(PhsicError):
    """Operand shapes are incompatible."""


class KernelError(PhsicError):
    """Invalid kernel configuration or kernel input (e.g. zero-norm vector)."""


class StateError(PhsicError):
    """Required cached state is missing or a stream was used before initialization."""


class DataFormatError(PhsicError):
    """A dataset file violates its binary format."""


class MagicNumberError(DataFormatError):
    """Wrong magic number in a dataset header."""


class TruncatedFileError(DataFormatError):
    """Dataset file ends before the declared payload."""


class SampleCountError(DataFormatError):
    """Image and label counts disagree."""


class RecordSizeError(DataFormatError):
    """Binary record stream is not a whole number of records."""


class CheckpointError(PhsicError):
    """Checkpoint file is corrupt or has an unsupported version."""


class ConfigError(PhsicError):
    """Invalid run configuration (unknown key, bad type, missing path)."""
