"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration, parameter shapes or variant name."""


class ContractViolation(ValueError):
    """A tensor argument broke a shape or scale precondition."""


class InputShapeError(ValueError):
    """Frame size cannot be processed by the multi-scale model."""


class DatasetError(ValueError):
    """Malformed dataset directory or frame data."""


class TrainingError(RuntimeError):
    """Training cannot continue (e.g. the loss became non-finite)."""
