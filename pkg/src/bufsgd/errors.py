"""Exception types shared across the package."""


class InvalidCandidatesError(ValueError):
    """Candidate gradients are empty, ragged, or contain non-finite values."""


class InvalidParameterError(ValueError):
    """A numeric parameter is outside its admissible range."""


class ConfigError(ValueError):
    """A run configuration failed validation.

    ``violations`` lists every failed constraint, one message each.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class PairingError(ValueError):
    """Suite configs differ in a dimension that must match across a pairing."""


class StarvationError(RuntimeError):
    """No SGD step fired within the configured simulated-time window."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
