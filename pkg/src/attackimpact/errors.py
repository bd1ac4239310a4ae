class RejectedInputError(ValueError):
    """Input has the wrong shape, range or mode for the requested operation."""


class ResourceLimitError(RuntimeError):
    """An exhaustive computation would exceed its configured size limit."""


class ConfigurationError(ValueError):
    """A model component is configured in a way that cannot be realized."""

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}
