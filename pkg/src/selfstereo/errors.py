"""Exception hierarchy shared by every selfstereo module."""


class SelfStereoError(RuntimeError):
    """Base class for operational failures surfaced by the CLI with exit code 1."""


class ShapeError(SelfStereoError, ValueError):
    """Tensor shapes or channel counts do not satisfy an operation's contract."""


class TapeError(SelfStereoError):
    """A tensor handle does not belong to the active tape epoch."""


class ConfigError(SelfStereoError, ValueError):
    """A configuration file could not be parsed or validated."""


class NonFiniteLossError(SelfStereoError):
    """A loss or gradient evaluated to NaN or infinity."""


class PfmError(SelfStereoError, ValueError):
    """Base class for PFM decoding failures."""


class PfmHeaderError(PfmError):
    pass


class PfmTruncatedError(PfmError):
    pass


class PfmScaleError(PfmError):
    pass


class CheckpointError(SelfStereoError):
    """Base class for checkpoint decoding failures."""


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class DigestMismatchError(CheckpointError):
    pass
