class ICFailureError(ValueError):
    """Raised when a measurement does not span the operator space, or its
    frame superoperator is too ill-conditioned to invert."""


class ConfigError(ValueError):
    """Invalid experiment configuration or input description."""


class ShotFileError(ValueError):
    """Malformed shot record file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
