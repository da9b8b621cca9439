"""Exception types shared across flipbench."""


class FlipbenchError(Exception):
    """Base class for all errors raised by flipbench."""


class InitSpecError(FlipbenchError, ValueError):
    pass


class KernelError(FlipbenchError):
    pass


class PinError(FlipbenchError):
    pass


class ProviderError(FlipbenchError):
    """A frequency provider could not produce a value for a core."""

    def __init__(self, core, reason):
        super().__init__(f"core {core}: {reason}")
        self.core = core
        self.reason = reason


class UnknownCoreError(ProviderError):
    pass


class TraceFormatError(FlipbenchError, ValueError):
    """A trace file could not be parsed. Carries the 1-based line number."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class AnalysisError(FlipbenchError, ValueError):
    pass


class SpearmanUndefinedError(AnalysisError):
    pass


class ReportError(FlipbenchError, ValueError):
    pass


class ConfigError(FlipbenchError, ValueError):
    pass
