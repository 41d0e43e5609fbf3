"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Invalid or inconsistent configuration value."""


class ContractError(ValueError):
    """Argument violates an operation's preconditions (shape, domain, finiteness)."""


class SizeError(ConfigurationError):
    """Symbol book would exceed the configured enumeration cap."""


class DetectionError(RuntimeError):
    """Detector cannot operate on the given channel (e.g. rank deficiency)."""


class TrainingError(RuntimeError):
    """MLP training diverged."""
