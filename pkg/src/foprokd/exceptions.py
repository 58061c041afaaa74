"""Exception types shared across the library."""


class FoproKDError(Exception):
    """Base class for all library errors."""


class InvalidInputError(FoproKDError):
    """Input data is malformed (non-finite entries, wrong rank, empty)."""


class InvalidArgumentError(FoproKDError):
    """An argument value or shape is outside its documented domain."""


class ContractViolationError(FoproKDError):
    """An internal contract was broken (symmetry, layer lists, frozen modules)."""


class DegenerateEncodingError(FoproKDError):
    """An encoding vector has zero norm and cannot be direction-normalized."""


class DatasetShortfallError(FoproKDError):
    """A class does not have enough samples to realize the requested split."""


class InvalidManifestError(FoproKDError):
    """A dataset manifest is inconsistent (empty class, unknown split, bad row)."""


class CheckpointError(FoproKDError):
    """A checkpoint file is missing, corrupt, or incompatible with the config."""


class ConfigError(FoproKDError):
    """Configuration is invalid; message names the offending field."""


class TrainingDivergedError(FoproKDError):
    """Training produced a non-finite loss.

    Carries the batch index and the individual loss components observed at
    the failing step so the run can be diagnosed post mortem.
    """

    def __init__(self, message, batch_index=None, components=None):
        super().__init__(message)
        self.batch_index = batch_index
        self.components = dict(components or {})
