"""Exception hierarchy shared by all modules."""


class StyleAuthError(Exception):
    """Base class for data and numeric failures (CLI exit status 2)."""


class WavFormatError(StyleAuthError):
    pass


class ManifestError(StyleAuthError):
    pass


class SplitError(StyleAuthError):
    pass


class FrameError(StyleAuthError):
    """Raised when a clip cannot be framed (e.g. shorter than one frame)."""


class DegenerateFrameError(StyleAuthError):
    pass


class NoUsableFramesError(StyleAuthError):
    pass


class DimensionError(StyleAuthError, ValueError):
    pass


class DecodingError(StyleAuthError):
    pass


class TrainingError(StyleAuthError):
    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class RegistryError(StyleAuthError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ConfigError(StyleAuthError):
    pass
